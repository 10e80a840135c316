#include "ghostlab/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "ghostlab/errors.hpp"
#include "ghostlab/io.hpp"

namespace ghostlab {

namespace {

constexpr double kHalfPi = 1.5707963267948966;

[[noreturn]] void fail(const std::string& path, int line,
                       const std::string& msg) {
  throw ConfigError(path, line, msg);
}

double parse_double(const std::string& path, int line, const std::string& key,
                    const std::string& token) {
  const char* s = token.c_str();
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(s, &end);
  if (token.empty() || end != s + token.size() || errno == ERANGE)
    fail(path, line, "bad numeric value '" + token + "' for " + key);
  return v;
}

std::int64_t parse_int(const std::string& path, int line,
                       const std::string& key, const std::string& token) {
  const char* s = token.c_str();
  char* end = nullptr;
  errno = 0;
  long long v = std::strtoll(s, &end, 10);
  if (token.empty() || end != s + token.size() || errno == ERANGE)
    fail(path, line, "bad integer value '" + token + "' for " + key);
  return v;
}

std::uint64_t parse_uint(const std::string& path, int line,
                         const std::string& key, const std::string& token) {
  const char* s = token.c_str();
  char* end = nullptr;
  errno = 0;
  unsigned long long v = std::strtoull(s, &end, 10);
  if (token.empty() || token[0] == '-' || end != s + token.size() ||
      errno == ERANGE)
    fail(path, line, "bad unsigned value '" + token + "' for " + key);
  return v;
}

std::vector<std::string> tokenize(const std::string& value) {
  std::istringstream in(value);
  std::vector<std::string> tokens;
  std::string t;
  while (in >> t) tokens.push_back(t);
  return tokens;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

PhaseProfile parse_phase_value(const std::string& path, int line,
                               const std::string& key,
                               const std::string& value) {
  std::vector<std::string> tok = tokenize(value);
  if (!tok.empty() && tok[0] == "linear") {
    if (tok.size() != 4)
      fail(path, line, key + ": expected 'linear <sx> <sy> <offset>'");
    return PhaseProfile::linear(parse_double(path, line, key, tok[1]),
                                parse_double(path, line, key, tok[2]),
                                parse_double(path, line, key, tok[3]));
  }
  if (!tok.empty() && tok[0] == "file") {
    if (tok.size() != 2) fail(path, line, key + ": expected 'file <path>'");
    std::filesystem::path ref(tok[1]);
    if (ref.is_relative())
      ref = std::filesystem::path(path).parent_path() / ref;
    try {
      return read_phase_profile(ref.string());
    } catch (const std::exception& e) {
      fail(path, line, key + ": " + e.what());
    }
  }
  fail(path, line, key + ": expected 'linear ...' or 'file <path>'");
}

std::vector<Setting> parse_settings_value(const std::string& path, int line,
                                          const std::string& value) {
  std::vector<Setting> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    std::size_t comma = value.find(',', start);
    std::string chunk = value.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    std::vector<std::string> tok = tokenize(chunk);
    if (tok.size() != 2)
      fail(path, line,
           "settings: each entry must be '<theta_s|INF> <theta_i>', got '" +
               trim(chunk) + "'");
    double ti = parse_double(path, line, "theta_i", tok[1]);
    if (tok[0] == "INF")
      out.push_back(Setting::marginal(ti));
    else
      out.push_back(
          Setting::angles(parse_double(path, line, "theta_s", tok[0]), ti));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) fail(path, line, "settings: need at least one entry");
  return out;
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  cfg.source.kappa = 5.9;
  cfg.source.sigma = 0.0;
  cfg.source.delta_k = 286.0;
  cfg.source.xi_k = 2.95;  // 0.5 * kappa
  cfg.source.bucket_radius_k = 60.0;
  cfg.source.fov_half_width = 25.0;

  cfg.noise.p_pair = 0.05;
  cfg.noise.chi_s = 0.075;
  cfg.noise.chi_i = 1.0;
  cfg.noise.zeta_s = 2.5e-4;  // measured signal rate minus p*chi_s
  cfg.noise.zeta_i = 4e-3;    // zeta_i/chi_i = 4 per mille
  cfg.noise.visibility = 0.8491;

  cfg.phase_s = PhaseProfile::linear(0.0, 0.0124, 0.0);
  cfg.phase_i = PhaseProfile::linear(0.0, 0.38, 0.0);

  cfg.n_trials = 20000000;
  cfg.seed = 12;
  cfg.bins_x = 64;
  cfg.bins_y = 64;
  cfg.settings = {Setting::angles(0.0, 0.0), Setting::angles(kHalfPi, 0.0),
                  Setting::angles(0.0, kHalfPi),
                  Setting::angles(kHalfPi, kHalfPi), Setting::marginal(0.0)};
  cfg.workers = 1;
  cfg.gzip = false;
  cfg.out_dir = ".";

  cfg.trial_rate_hz = 32000.0;
  cfg.duty = 0.10;
  cfg.readout_delay_s = 45e-6;
  cfg.memory_halflife_s = 45e-6;
  return cfg;
}

RunConfig parse_config(const std::string& text, const std::string& path) {
  RunConfig cfg = default_config();
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::vector<std::string> seen;
  int line_no = 0;

  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::string line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail(path, line_no, "unterminated section header");
      section = line.substr(1, line.size() - 2);
      if (section != "source" && section != "noise" && section != "phases" &&
          section != "run")
        fail(path, line_no, "unknown section [" + section + "]");
      continue;
    }

    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(path, line_no, "expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(path, line_no, "empty key");
    if (section.empty())
      fail(path, line_no, "key '" + key + "' appears before any section");

    std::string qual = section + "." + key;
    for (const auto& s : seen)
      if (s == qual) fail(path, line_no, "duplicate key '" + qual + "'");
    seen.push_back(qual);

    auto one_double = [&]() {
      std::vector<std::string> tok = tokenize(value);
      if (tok.size() != 1) fail(path, line_no, key + ": expected one value");
      return parse_double(path, line_no, key, tok[0]);
    };
    auto positive = [&](double v, const char* what) {
      if (!(v > 0.0)) fail(path, line_no, key + std::string(" must be ") + what);
      return v;
    };

    if (section == "source") {
      if (key == "kappa")
        cfg.source.kappa = positive(one_double(), "> 0");
      else if (key == "sigma") {
        double v = one_double();
        if (v < 0.0) fail(path, line_no, "sigma must be >= 0");
        cfg.source.sigma = v;
      } else if (key == "delta_k") {
        double v = one_double();
        if (v < 0.0) fail(path, line_no, "delta_k must be >= 0");
        cfg.source.delta_k = v;
      } else if (key == "xi_k") {
        double v = one_double();
        if (v < 0.0) fail(path, line_no, "xi_k must be >= 0");
        cfg.source.xi_k = v;
      } else if (key == "bucket_radius_k")
        cfg.source.bucket_radius_k = positive(one_double(), "> 0");
      else if (key == "fov_half_width")
        cfg.source.fov_half_width = positive(one_double(), "> 0");
      else
        fail(path, line_no, "unknown key '" + key + "' in [source]");
    } else if (section == "noise") {
      auto prob = [&]() {
        double v = one_double();
        if (!(v >= 0.0 && v <= 1.0))
          fail(path, line_no, key + " must lie in [0, 1]");
        return v;
      };
      if (key == "p")
        cfg.noise.p_pair = prob();
      else if (key == "chi_s")
        cfg.noise.chi_s = prob();
      else if (key == "chi_i")
        cfg.noise.chi_i = prob();
      else if (key == "zeta_s")
        cfg.noise.zeta_s = prob();
      else if (key == "zeta_i")
        cfg.noise.zeta_i = prob();
      else if (key == "visibility")
        cfg.noise.visibility = prob();
      else
        fail(path, line_no, "unknown key '" + key + "' in [noise]");
    } else if (section == "phases") {
      if (key == "phase_s")
        cfg.phase_s = parse_phase_value(path, line_no, key, value);
      else if (key == "phase_i")
        cfg.phase_i = parse_phase_value(path, line_no, key, value);
      else
        fail(path, line_no, "unknown key '" + key + "' in [phases]");
    } else {  // [run]
      if (key == "n_trials") {
        std::int64_t v = parse_int(path, line_no, key, value);
        if (v < 1) fail(path, line_no, "n_trials must be >= 1");
        cfg.n_trials = v;
      } else if (key == "seed") {
        cfg.seed = parse_uint(path, line_no, key, value);
      } else if (key == "bins") {
        std::vector<std::string> tok = tokenize(value);
        if (tok.size() != 2) fail(path, line_no, "bins: expected '<nx> <ny>'");
        std::int64_t nx = parse_int(path, line_no, key, tok[0]);
        std::int64_t ny = parse_int(path, line_no, key, tok[1]);
        if (nx < 2 || ny < 2 || nx > 4096 || ny > 4096)
          fail(path, line_no, "bins must lie in [2, 4096]");
        cfg.bins_x = static_cast<int>(nx);
        cfg.bins_y = static_cast<int>(ny);
      } else if (key == "settings") {
        cfg.settings = parse_settings_value(path, line_no, value);
      } else if (key == "workers") {
        std::int64_t v = parse_int(path, line_no, key, value);
        if (v < 1 || v > 4096) fail(path, line_no, "workers must be >= 1");
        cfg.workers = static_cast<int>(v);
      } else if (key == "gzip") {
        if (value == "true" || value == "1")
          cfg.gzip = true;
        else if (value == "false" || value == "0")
          cfg.gzip = false;
        else
          fail(path, line_no, "gzip must be true or false");
      } else if (key == "out") {
        if (value.empty()) fail(path, line_no, "out: empty path");
        cfg.out_dir = value;
      } else if (key == "trial_rate_hz") {
        double v = one_double();
        if (v < 0.0) fail(path, line_no, "trial_rate_hz must be >= 0");
        cfg.trial_rate_hz = v;
      } else if (key == "duty") {
        double v = one_double();
        if (!(v >= 0.0 && v <= 1.0))
          fail(path, line_no, "duty must lie in [0, 1]");
        cfg.duty = v;
      } else if (key == "readout_delay_s") {
        double v = one_double();
        if (v < 0.0) fail(path, line_no, "readout_delay_s must be >= 0");
        cfg.readout_delay_s = v;
      } else if (key == "memory_halflife_s") {
        cfg.memory_halflife_s = positive(one_double(), "> 0");
      } else {
        fail(path, line_no, "unknown key '" + key + "' in [run]");
      }
    }
  }

  try {
    cfg.source.validate();  // cross-field checks; per-key ranges already done
    cfg.noise.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  return parse_config(read_text_file(path), path);
}

std::string render_config(const RunConfig& cfg) {
  std::ostringstream out;
  auto phase_line = [](const PhaseProfile& p) -> std::string {
    if (p.kind() != PhaseProfile::Kind::linear)
      throw std::logic_error("render_config supports only linear profiles");
    return "linear " + format_g17(p.slope_x()) + " " + format_g17(p.slope_y()) +
           " " + format_g17(p.offset());
  };

  out << "[source]\n";
  out << "kappa = " << format_g17(cfg.source.kappa) << '\n';
  out << "sigma = " << format_g17(cfg.source.sigma) << '\n';
  out << "delta_k = " << format_g17(cfg.source.delta_k) << '\n';
  out << "xi_k = " << format_g17(cfg.source.xi_k) << '\n';
  out << "bucket_radius_k = " << format_g17(cfg.source.bucket_radius_k) << '\n';
  out << "fov_half_width = " << format_g17(cfg.source.fov_half_width) << '\n';
  out << "\n[noise]\n";
  out << "p = " << format_g17(cfg.noise.p_pair) << '\n';
  out << "chi_s = " << format_g17(cfg.noise.chi_s) << '\n';
  out << "chi_i = " << format_g17(cfg.noise.chi_i) << '\n';
  out << "zeta_s = " << format_g17(cfg.noise.zeta_s) << '\n';
  out << "zeta_i = " << format_g17(cfg.noise.zeta_i) << '\n';
  out << "visibility = " << format_g17(cfg.noise.visibility) << '\n';
  out << "\n[phases]\n";
  out << "phase_s = " << phase_line(cfg.phase_s) << '\n';
  out << "phase_i = " << phase_line(cfg.phase_i) << '\n';
  out << "\n[run]\n";
  out << "n_trials = " << cfg.n_trials << '\n';
  out << "seed = " << cfg.seed << '\n';
  out << "bins = " << cfg.bins_x << ' ' << cfg.bins_y << '\n';
  out << "settings = ";
  for (std::size_t i = 0; i < cfg.settings.size(); ++i) {
    const Setting& s = cfg.settings[i];
    if (i) out << ", ";
    out << (s.is_marginal() ? std::string("INF")
                            : format_g17(s.theta_s()))
        << ' ' << format_g17(s.theta_i());
  }
  out << '\n';
  out << "workers = " << cfg.workers << '\n';
  out << "gzip = " << (cfg.gzip ? "true" : "false") << '\n';
  out << "out = " << cfg.out_dir << '\n';
  out << "trial_rate_hz = " << format_g17(cfg.trial_rate_hz) << '\n';
  out << "duty = " << format_g17(cfg.duty) << '\n';
  out << "readout_delay_s = " << format_g17(cfg.readout_delay_s) << '\n';
  out << "memory_halflife_s = " << format_g17(cfg.memory_halflife_s) << '\n';
  return out.str();
}

}  // namespace ghostlab
