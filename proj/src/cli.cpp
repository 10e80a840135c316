#include "ghostlab/cli.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ghostlab/analysis.hpp"
#include "ghostlab/config.hpp"
#include "ghostlab/errors.hpp"
#include "ghostlab/io.hpp"
#include "ghostlab/measurement.hpp"
#include "ghostlab/montecarlo.hpp"
#include "ghostlab/phaseret.hpp"
#include "ghostlab/version.hpp"
#include "json.hpp"

namespace ghostlab {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

enum LogLevel { kOff = 0, kError = 1, kWarn = 2, kInfo = 3, kDebug = 4 };

int log_threshold() {
  static const int level = [] {
    const char* v = std::getenv("GHOSTLAB_LOG");
    if (!v) return static_cast<int>(kWarn);
    const std::string s(v);
    if (s == "off") return static_cast<int>(kOff);
    if (s == "error") return static_cast<int>(kError);
    if (s == "warn") return static_cast<int>(kWarn);
    if (s == "info") return static_cast<int>(kInfo);
    if (s == "debug") return static_cast<int>(kDebug);
    return static_cast<int>(kWarn);
  }();
  return level;
}

void logmsg(std::ostream& err, int level, const std::string& msg) {
  static const char* tags[] = {"", "error", "warn", "info", "debug"};
  if (level <= log_threshold()) err << "[" << tags[level] << "] " << msg << "\n";
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Every setting gets its own sub-seed so frames of one run are statistically
// independent; the double mix keeps nearby user seeds from sharing streams.
std::uint64_t setting_seed(std::uint64_t seed, std::size_t index) {
  return mix64(mix64(seed) ^ (static_cast<std::uint64_t>(index) + 1));
}

Setting parse_setting_tokens(const std::string& ts, const std::string& ti) {
  auto to_double = [](const std::string& t) {
    const char* s = t.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (t.empty() || end != s + t.size())
      throw ConfigError("--setting: bad angle '" + t + "'");
    return v;
  };
  if (ts == "INF") return Setting::marginal(to_double(ti));
  return Setting::angles(to_double(ts), to_double(ti));
}

// CLI-side overrides applied on top of the (possibly default) config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
  std::vector<int> bins;               // empty or {nx, ny}
  std::vector<std::string> settings;   // flat, two tokens per occurrence
  bool gzip = false;
};

RunConfig effective_config(const std::string& config_path, const Overrides& ov,
                           std::ostream& err) {
  RunConfig cfg =
      config_path.empty() ? default_config() : load_config(config_path);
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.workers) cfg.workers = *ov.workers;
  if (ov.out) cfg.out_dir = *ov.out;
  if (!ov.bins.empty()) {
    cfg.bins_x = ov.bins[0];
    cfg.bins_y = ov.bins[1];
    if (cfg.bins_x < 2 || cfg.bins_y < 2)
      throw ConfigError("--bins: values must be >= 2");
  }
  if (!ov.settings.empty()) {
    cfg.settings.clear();
    for (std::size_t i = 0; i + 1 < ov.settings.size(); i += 2)
      cfg.settings.push_back(
          parse_setting_tokens(ov.settings[i], ov.settings[i + 1]));
  }
  if (ov.gzip) cfg.gzip = true;
  for (const std::string& w : cfg.source.validate()) logmsg(err, kWarn, w);
  return cfg;
}

std::string setting_label(const Setting& s) {
  std::ostringstream os;
  os << std::setprecision(6) << "theta_s="
     << (s.is_marginal() ? std::string("INF") : std::to_string(s.theta_s()))
     << " theta_i=" << s.theta_i();
  return os.str();
}

json setting_json(const Setting& s) {
  json j;
  if (s.is_marginal())
    j["theta_s"] = "INF";
  else
    j["theta_s"] = s.theta_s();
  j["theta_i"] = s.theta_i();
  return j;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  fs::create_directories(cfg.out_dir);
  const FrameGrid grid = cfg.grid();
  const BellEprState state{cfg.source, cfg.phase_s, cfg.phase_i};
  const std::string ext = cfg.gzip ? ".txt.gz" : ".txt";
  auto in_dir = [&](const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
  };

  json manifest;
  manifest["command"] = "simulate";
  manifest["version"] = kVersion;
  manifest["config_hash"] = "fnv1a:" + hex64(fnv1a64(render_config(cfg)));
  manifest["seed"] = cfg.seed;
  manifest["n_trials"] = cfg.n_trials;
  manifest["workers"] = cfg.workers;
  manifest["gzip"] = cfg.gzip;
  manifest["bins"] = json::array({cfg.bins_x, cfg.bins_y});
  manifest["fov_half_width"] = cfg.source.fov_half_width;
  manifest["phase_s_file"] = "phase_s.phase";
  manifest["phase_i_file"] = "phase_i.phase";
  manifest["settings"] = json::array();

  write_phase_profile(in_dir("phase_s.phase"), cfg.phase_s);
  write_phase_profile(in_dir("phase_i.phase"), cfg.phase_i);

  std::exception_ptr failure;
  for (std::size_t j = 0; j < cfg.settings.size(); ++j) {
    const Setting& setting = cfg.settings[j];
    char idx[8];
    std::snprintf(idx, sizeof idx, "%02zu", j);
    json entry = setting_json(setting);
    entry["file_plus"] = "frames_" + std::string(idx) + "_plus" + ext;
    entry["file_minus"] = "frames_" + std::string(idx) + "_minus" + ext;
    entry["file_events"] = "events_" + std::string(idx) + ext;

    if (failure) {
      entry["status"] = "not-run";
      manifest["settings"].push_back(entry);
      continue;
    }
    try {
      logmsg(err, kInfo,
             "simulate: setting " + std::string(idx) + " (" +
                 setting_label(setting) + ")");
      RunResult result =
          run_sequence(state, cfg.noise, setting, cfg.n_trials,
                       setting_seed(cfg.seed, j), cfg.workers,
                       RunMode::feedback, grid);
      write_frame_channel(in_dir(entry["file_plus"]), result.frames,
                          Channel::plus, cfg.gzip);
      write_frame_channel(in_dir(entry["file_minus"]), result.frames,
                          Channel::minus, cfg.gzip);
      write_event_log(in_dir(entry["file_events"]), result.events, cfg.gzip);
      entry["trials"] = result.frames.trials;
      entry["bucket_clicks"] = result.frames.bucket_clicks;
      entry["readouts"] = result.frames.readouts;
      entry["counts_plus"] = result.frames.counts_plus.sum();
      entry["counts_minus"] = result.frames.counts_minus.sum();
      entry["status"] = "ok";
    } catch (const std::exception& e) {
      entry["status"] = std::string("failed: ") + e.what();
      failure = std::current_exception();
    }
    manifest["settings"].push_back(entry);
  }

  write_text_file(in_dir("manifest.json"), manifest.dump(2) + "\n");
  if (failure) std::rethrow_exception(failure);

  out << "simulate: " << cfg.settings.size() << " settings x " << cfg.n_trials
      << " trials, seed " << cfg.seed << "\n";
  for (const json& e : manifest["settings"])
    out << "  " << e["file_plus"].get<std::string>() << " / "
        << e["file_minus"].get<std::string>() << ": "
        << e["counts_plus"].get<std::int64_t>() << " + "
        << e["counts_minus"].get<std::int64_t>() << " camera counts\n";
  out << "manifest: " << in_dir("manifest.json") << "\n";
  return 0;
}

json load_manifest(const std::string& dir) {
  const std::string path = (fs::path(dir) / "manifest.json").string();
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("cannot read manifest: ") + e.what());
  }
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Frame sets of one simulate run, in manifest order, marginals separated.
struct LoadedFrames {
  std::vector<FrameSet> bell;      // non-marginal, manifest order
  std::vector<FrameSet> marginal;
  PhaseProfile phase_s;
  PhaseProfile phase_i;
};

LoadedFrames load_frames(const std::string& dir, const std::string& phase_s_path,
                         const std::string& phase_i_path, std::ostream& err) {
  const json manifest = load_manifest(dir);
  LoadedFrames loaded;
  try {
    const double fov = manifest.at("fov_half_width").get<double>();
    auto in_dir = [&](const std::string& name) {
      return (fs::path(dir) / name).string();
    };
    loaded.phase_s = read_phase_profile(
        phase_s_path.empty()
            ? in_dir(manifest.at("phase_s_file").get<std::string>())
            : phase_s_path);
    loaded.phase_i = read_phase_profile(
        phase_i_path.empty()
            ? in_dir(manifest.at("phase_i_file").get<std::string>())
            : phase_i_path);
    for (const json& e : manifest.at("settings")) {
      if (e.at("status").get<std::string>() != "ok") {
        logmsg(err, kWarn,
               "skipping setting with status '" +
                   e.at("status").get<std::string>() + "'");
        continue;
      }
      FrameSet fs = assemble_frames(
          read_frame_channel(in_dir(e.at("file_plus").get<std::string>())),
          read_frame_channel(in_dir(e.at("file_minus").get<std::string>())),
          fov);
      (fs.setting.is_marginal() ? loaded.marginal : loaded.bell)
          .push_back(std::move(fs));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return loaded;
}

int cmd_bell(const std::string& dir, const std::string& phase_s_path,
             const std::string& phase_i_path, const std::string& report_path,
             std::ostream& out, std::ostream& err) {
  LoadedFrames loaded = load_frames(dir, phase_s_path, phase_i_path, err);
  if (loaded.marginal.empty())
    throw InsufficientDataError(
        "bell: no marginal (theta_s=INF) frames in " + dir +
        "; the C^inf term of the S estimator cannot be formed");
  if (loaded.bell.size() != 4)
    throw InsufficientDataError(
        "bell: need the four polarizer settings, found " +
        std::to_string(loaded.bell.size()));
  if (loaded.marginal.size() > 1)
    logmsg(err, kWarn, "bell: several marginal runs present, using the first");

  std::vector<CorrelationMap> maps;
  for (const FrameSet& fs : loaded.bell) maps.push_back(correlation_map(fs));
  const PhaseProfile joint =
      combine_profiles(loaded.phase_s, loaded.phase_i, loaded.bell[0].grid);

  BellReport report;
  for (int i = 0; i < 4; ++i) {
    report.settings[i] = maps[i].setting;
    FringeFit fit = fringe_fit(maps[i], joint);
    report.visibilities[i] = {fit.visibility, fit.visibility_err};
  }
  report.c_marginal = pooled_c(correlation_map(loaded.marginal[0]));

  ChshResult chsh = bell_s_chsh(report.visibilities, report.c_marginal);
  report.s_chsh = chsh.s;
  report.sd_violation_chsh = chsh.sd_violation;
  report.s_chsh_raw = bell_s_chsh_raw(maps, joint, report.c_marginal).s;

  // Single-image estimator on the first polarizer setting's ghost image.
  FreedmanResult fr = bell_s_freedman(loaded.bell[0], loaded.phase_s,
                                      loaded.phase_i, report.c_marginal);
  report.s_freedman = fr.s;
  report.v_freedman = fr.v;
  report.sd_violation_freedman = fr.sd_violation;
  report.curve = fr.curve;

  write_bell_report(report_path, report);

  out << std::setprecision(6);
  out << "C^inf      = " << report.c_marginal.value << " +/- "
      << report.c_marginal.error << "\n";
  out << "V          =";
  for (const ValueWithError& v : report.visibilities) out << " " << v.value;
  out << "  (four settings)\n";
  out << "S_chsh     = " << report.s_chsh.value << " +/- "
      << report.s_chsh.error << "  (raw window: " << report.s_chsh_raw.value
      << " +/- " << report.s_chsh_raw.error << ")\n";
  out << "S_freedman = " << report.s_freedman.value << " +/- "
      << report.s_freedman.error << "  (V = " << report.v_freedman.value
      << " +/- " << report.v_freedman.error << ")\n";
  if (report.sd_violation_freedman > 3.0)
    out << "VIOLATION: S - 2 exceeds 3 sigma ("
        << report.sd_violation_freedman << " SDs single-image, "
        << report.sd_violation_chsh << " SDs four-setting)\n";
  else
    out << "no violation: S - 2 = " << report.sd_violation_freedman
        << " sigma single-image, " << report.sd_violation_chsh
        << " sigma four-setting\n";
  out << "report: " << report_path << "\n";
  return 0;
}

int cmd_retrieve_phase(const std::string& dir, const std::string& out_path,
                       bool demodulate, bool conjugate, std::ostream& out,
                       std::ostream& err) {
  LoadedFrames loaded = load_frames(dir, "", "", err);
  if (!loaded.marginal.empty())
    logmsg(err, kWarn, "retrieve-phase: marginal frames carry no sweep phase, "
                       "skipping them");
  if (loaded.bell.size() < 2)
    throw InsufficientDataError(
        "retrieve-phase: need at least two sweep frames, found " +
        std::to_string(loaded.bell.size()));

  FringeStack stack;
  stack.grid = loaded.bell[0].grid;
  for (const FrameSet& fs : loaded.bell) {
    stack.frames.push_back(correlation_map(fs).c);
    stack.thetas.push_back(fs.setting.theta_s() - fs.setting.theta_i());
  }

  RetrievalOptions options;
  options.demodulate = demodulate;
  options.take_conjugate = conjugate;
  RetrievedPhase result = retrieve_phase(stack, options);
  if (result.low_quality)
    logmsg(err, kWarn, "retrieve-phase: low mean phasor quality");
  if (result.narrow_sweep)
    logmsg(err, kWarn, "retrieve-phase: sweep spans less than pi");

  write_phase_profile(out_path, result.profile);
  out << std::setprecision(6);
  out << "carrier window: center (" << result.window.cx << ", "
      << result.window.cy << "), half-widths (" << result.window.half_x << ", "
      << result.window.half_y << ")\n";
  out << "mean phasor quality: " << result.mean_quality << "\n";
  out << "profile: " << out_path << "\n";
  return 0;
}

int cmd_budget(const RunConfig& cfg, std::ostream& out) {
  const NoiseModel& nm = cfg.noise;
  double accidental = nm.p_pair;
  if (nm.chi_s > 0.0) accidental += nm.zeta_s / nm.chi_s;
  if (nm.chi_i > 0.0) accidental += nm.zeta_i / nm.chi_i;
  const double g2 =
      accidental > 0.0 ? 1.0 + 1.0 / accidental
                       : std::numeric_limits<double>::infinity();
  const double v_ult = std::isfinite(g2) ? (g2 - 1.0) / (g2 + 1.0) : 1.0;

  double alpha;
  if (cfg.phase_s.kind() == PhaseProfile::Kind::linear) {
    alpha = std::hypot(cfg.phase_s.slope_x(), cfg.phase_s.slope_y());
  } else {
    const Eigen::ArrayXXd& v = cfg.phase_s.values();
    KVector mid{cfg.phase_s.x0() + 0.5 * (v.cols() - 1) * cfg.phase_s.dx(),
                cfg.phase_s.y0() + 0.5 * (v.rows() - 1) * cfg.phase_s.dy()};
    alpha = cfg.phase_s.gradient(mid).norm();
  }

  VisibilityBudget budget = visibility_budget(v_ult, nm.visibility, alpha,
                                              cfg.source.kappa,
                                              cfg.source.xi_k);
  out << std::setprecision(6);
  out << "visibility budget\n";
  out << "  v_ult   = " << budget.v_ult << "  (model g2 = " << g2 << ")\n";
  out << "  optics  = " << budget.optics << "\n";
  out << "  v_kappa = " << budget.v_kappa << "  (|grad phi_s| = " << alpha
      << ", kappa = " << cfg.source.kappa << ")\n";
  out << "  v_xi    = " << budget.v_xi << "  (xi_k = " << cfg.source.xi_k
      << ")\n";
  out << "  total   = " << budget.total() << "\n";
  return 0;
}

int cmd_rates(const RunConfig& cfg, std::ostream& out) {
  RateReport r = rate_report(cfg.noise, cfg.trial_rate_hz, cfg.duty,
                             cfg.readout_delay_s, cfg.memory_halflife_s);
  out << std::setprecision(6);
  out << "coincidence rates\n";
  out << "  trial_rate_hz     = " << r.trial_rate_hz << "\n";
  out << "  duty              = " << r.duty << "\n";
  out << "  coincidence_prob  = " << r.coincidence_prob << "\n";
  out << "  retention         = " << r.retention << "  (delay " << r.delay_s
      << " s, half-life " << r.memory_halflife_s << " s)\n";
  out << "  instantaneous_cps = " << r.instantaneous_cps << "\n";
  out << "  average_cps       = " << r.average_cps << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"wavevector-entangled ghost-imaging simulator and Bell-test "
               "analysis toolkit"};
  app.name("ghostlab");
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path, frames_dir, out_path, phase_s_path, phase_i_path;
  Overrides ov;
  bool demodulate = false, conjugate = false;

  CLI::App* sim = app.add_subcommand(
      "simulate", "run the pair source and write frame files");
  sim->add_option("--config", config_path, "run configuration file");
  sim->add_option("--seed", ov.seed, "override [run] seed");
  sim->add_option("--workers", ov.workers, "override [run] workers")
      ->check(CLI::Range(1, 4096));
  sim->add_option("--out", ov.out, "override [run] out directory");
  sim->add_option("--bins", ov.bins, "override [run] bins (NX NY)")
      ->type_size(2);
  sim->add_option("--setting", ov.settings,
                  "replace settings: THETA_S|INF THETA_I (repeatable)")
      ->type_size(2);
  sim->add_flag("--gzip", ov.gzip, "gzip frame and event files");

  CLI::App* bell = app.add_subcommand(
      "bell", "Bell analysis of a simulate output directory");
  bell->add_option("dir", frames_dir, "simulate output directory")->required();
  bell->add_option("--phase-s", phase_s_path, "signal phase profile override");
  bell->add_option("--phase-i", phase_i_path, "idler phase profile override");
  bell->add_option("--out", out_path, "report path (default dir/bell_report.txt)");

  CLI::App* retrieve = app.add_subcommand(
      "retrieve-phase", "Fourier phase retrieval from a frame sweep");
  retrieve->add_option("dir", frames_dir, "simulate output directory")
      ->required();
  retrieve->add_option("--out", out_path,
                       "profile path (default dir/retrieved.phase)");
  retrieve->add_flag("--demodulate", demodulate,
                     "remove the carrier ramp from the result");
  retrieve->add_flag("--conjugate", conjugate, "select the mirror sideband");

  CLI::App* budget = app.add_subcommand(
      "budget", "multiplicative visibility budget of a configuration");
  budget->add_option("--config", config_path, "run configuration file");

  CLI::App* rates = app.add_subcommand(
      "rates", "coincidence-rate and mode-retention report");
  rates->add_option("--config", config_path, "run configuration file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (sim->parsed())
      return cmd_simulate(effective_config(config_path, ov, err), out, err);
    if (bell->parsed()) {
      if (out_path.empty())
        out_path = (fs::path(frames_dir) / "bell_report.txt").string();
      return cmd_bell(frames_dir, phase_s_path, phase_i_path, out_path, out,
                      err);
    }
    if (retrieve->parsed()) {
      if (out_path.empty())
        out_path = (fs::path(frames_dir) / "retrieved.phase").string();
      return cmd_retrieve_phase(frames_dir, out_path, demodulate, conjugate,
                                out, err);
    }
    if (budget->parsed())
      return cmd_budget(effective_config(config_path, ov, err), out);
    if (rates->parsed())
      return cmd_rates(effective_config(config_path, ov, err), out);
    err << "usage error: no subcommand\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InsufficientDataError& e) {
    err << "insufficient data: " << e.what() << "\n";
    return 4;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::out_of_range& e) {
    err << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace ghostlab
