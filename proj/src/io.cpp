#include "ghostlab/io.hpp"

#include <zlib.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ghostlab/errors.hpp"

namespace ghostlab {

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line,
                             const std::string& msg) {
  throw ConfigError(path, line, msg);
}

// Token scanner for one whitespace-separated line.
class Tokens {
 public:
  Tokens(const std::string& path, int line, const std::string& text)
      : path_(path), line_(line), in_(text) {}

  std::string next(const char* what) {
    std::string t;
    if (!(in_ >> t)) parse_fail(path_, line_, std::string("missing ") + what);
    return t;
  }

  double next_double(const char* what) {
    std::string t = next(what);
    const char* s = t.c_str();
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(s, &end);
    if (end != s + t.size() || errno == ERANGE)
      parse_fail(path_, line_,
                 std::string("bad ") + what + " value '" + t + "'");
    return v;
  }

  std::int64_t next_int(const char* what) {
    std::string t = next(what);
    const char* s = t.c_str();
    char* end = nullptr;
    errno = 0;
    long long v = std::strtoll(s, &end, 10);
    if (end != s + t.size() || errno == ERANGE)
      parse_fail(path_, line_,
                 std::string("bad ") + what + " value '" + t + "'");
    return v;
  }

  void expect_end() {
    std::string t;
    if (in_ >> t)
      parse_fail(path_, line_, "unexpected trailing token '" + t + "'");
  }

 private:
  const std::string& path_;
  int line_;
  std::istringstream in_;
};

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    std::string line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = nl + 1;
  }
  return lines;
}

}  // namespace

std::string read_text_file(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw ConfigError("cannot open '" + path + "' for reading");
  std::string out;
  char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, n);
  bool bad = n < 0;
  gzclose(f);
  if (bad) throw ConfigError("read error in '" + path + "'");
  return out;
}

void write_text_file(const std::string& path, const std::string& content,
                     bool gzip) {
  if (gzip) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw ConfigError("cannot open '" + path + "' for writing");
    std::size_t off = 0;
    while (off < content.size()) {
      unsigned chunk = static_cast<unsigned>(
          std::min<std::size_t>(content.size() - off, 1u << 20));
      if (gzwrite(f, content.data() + off, chunk) != static_cast<int>(chunk)) {
        gzclose(f);
        throw ConfigError("write error in '" + path + "'");
      }
      off += chunk;
    }
    if (gzclose(f) != Z_OK) throw ConfigError("write error in '" + path + "'");
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  f.flush();
  if (!f) throw ConfigError("write error in '" + path + "'");
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_phase_profile(const std::string& path, const PhaseProfile& profile,
                         bool gzip) {
  std::ostringstream out;
  if (profile.kind() == PhaseProfile::Kind::linear) {
    out << "PHASE v1 linear " << format_g17(profile.slope_x()) << ' '
        << format_g17(profile.slope_y()) << ' ' << format_g17(profile.offset())
        << '\n';
  } else {
    const Eigen::ArrayXXd& v = profile.values();
    out << "PHASE v1 sampled " << v.cols() << ' ' << v.rows() << ' '
        << format_g17(profile.x0()) << ' ' << format_g17(profile.y0()) << ' '
        << format_g17(profile.dx()) << ' ' << format_g17(profile.dy()) << '\n';
    for (Eigen::Index iy = 0; iy < v.rows(); ++iy) {
      for (Eigen::Index ix = 0; ix < v.cols(); ++ix) {
        if (ix) out << ' ';
        out << format_g17(v(iy, ix));
      }
      out << '\n';
    }
  }
  write_text_file(path, out.str(), gzip);
}

PhaseProfile read_phase_profile(const std::string& path) {
  std::vector<std::string> lines = split_lines(read_text_file(path));
  if (lines.empty()) parse_fail(path, 1, "empty phase file");

  Tokens head(path, 1, lines[0]);
  if (head.next("magic") != "PHASE") parse_fail(path, 1, "not a PHASE file");
  if (head.next("version") != "v1")
    parse_fail(path, 1, "unsupported PHASE version");
  std::string kind = head.next("profile kind");

  if (kind == "linear") {
    double sx = head.next_double("slope_x");
    double sy = head.next_double("slope_y");
    double off = head.next_double("offset");
    head.expect_end();
    return PhaseProfile::linear(sx, sy, off);
  }
  if (kind != "sampled") parse_fail(path, 1, "unknown profile kind '" + kind + "'");

  std::int64_t nx = head.next_int("nx");
  std::int64_t ny = head.next_int("ny");
  double x0 = head.next_double("x0");
  double y0 = head.next_double("y0");
  double dx = head.next_double("dx");
  double dy = head.next_double("dy");
  head.expect_end();
  if (nx < 2 || ny < 2 || nx > 65536 || ny > 65536)
    parse_fail(path, 1, "bad sampled grid size");
  if (static_cast<std::int64_t>(lines.size()) < 1 + ny)
    parse_fail(path, static_cast<int>(lines.size()),
               "expected " + std::to_string(ny) + " sample rows");

  Eigen::ArrayXXd values(ny, nx);
  for (std::int64_t iy = 0; iy < ny; ++iy) {
    Tokens row(path, static_cast<int>(iy) + 2, lines[iy + 1]);
    for (std::int64_t ix = 0; ix < nx; ++ix)
      values(iy, ix) = row.next_double("sample");
    row.expect_end();
  }
  return PhaseProfile::sampled(values, x0, y0, dx, dy);
}

namespace {

std::string setting_descriptor(const Setting& setting) {
  std::string s = "theta_s=";
  s += setting.is_marginal() ? "INF" : format_g17(setting.theta_s());
  s += " theta_i=" + format_g17(setting.theta_i());
  return s;
}

Setting parse_setting_tokens(const std::string& path, int line,
                             const std::string& ts, const std::string& ti) {
  auto to_double = [&](const std::string& t, const char* what) {
    const char* s = t.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end != s + t.size())
      parse_fail(path, line, std::string("bad ") + what + " '" + t + "'");
    return v;
  };
  double theta_i = to_double(ti, "theta_i");
  if (ts == "INF") return Setting::marginal(theta_i);
  return Setting::angles(to_double(ts, "theta_s"), theta_i);
}

}  // namespace

void write_frame_channel(const std::string& path, const FrameSet& frames,
                         Channel channel, bool gzip) {
  const ArrayXXi64& counts =
      channel == Channel::plus ? frames.counts_plus : frames.counts_minus;
  std::ostringstream out;
  out << "GIFRAME v1 " << frames.grid.nx << ' ' << frames.grid.ny << '\n';
  out << setting_descriptor(frames.setting) << " channel="
      << (channel == Channel::plus ? '+' : '-') << '\n';
  for (int iy = 0; iy < frames.grid.ny; ++iy) {
    for (int ix = 0; ix < frames.grid.nx; ++ix) {
      if (ix) out << ' ';
      out << counts(iy, ix);
    }
    out << '\n';
  }
  write_text_file(path, out.str(), gzip);
}

FrameChannel read_frame_channel(const std::string& path) {
  std::vector<std::string> lines = split_lines(read_text_file(path));
  if (lines.size() < 2) parse_fail(path, 1, "truncated frame file");

  Tokens head(path, 1, lines[0]);
  if (head.next("magic") != "GIFRAME")
    parse_fail(path, 1, "not a GIFRAME file");
  if (head.next("version") != "v1")
    parse_fail(path, 1, "unsupported GIFRAME version");
  std::int64_t nx = head.next_int("nx");
  std::int64_t ny = head.next_int("ny");
  head.expect_end();
  if (nx < 1 || ny < 1 || nx > 16384 || ny > 16384)
    parse_fail(path, 1, "bad frame dimensions");

  // Descriptor: theta_s=<rad|INF> theta_i=<rad> channel=<+|->
  Tokens desc(path, 2, lines[1]);
  auto keyed = [&](const std::string& token, const char* key) {
    std::string prefix = std::string(key) + "=";
    if (token.rfind(prefix, 0) != 0)
      parse_fail(path, 2, std::string("expected ") + key + "=..., got '" +
                              token + "'");
    return token.substr(prefix.size());
  };
  std::string ts = keyed(desc.next("theta_s"), "theta_s");
  std::string ti = keyed(desc.next("theta_i"), "theta_i");
  std::string ch = keyed(desc.next("channel"), "channel");
  desc.expect_end();

  FrameChannel out;
  out.nx = static_cast<int>(nx);
  out.ny = static_cast<int>(ny);
  out.setting = parse_setting_tokens(path, 2, ts, ti);
  if (ch == "+")
    out.channel = Channel::plus;
  else if (ch == "-")
    out.channel = Channel::minus;
  else
    parse_fail(path, 2, "bad channel '" + ch + "'");

  if (static_cast<std::int64_t>(lines.size()) < 2 + ny)
    parse_fail(path, static_cast<int>(lines.size()),
               "expected " + std::to_string(ny) + " count rows");
  out.counts = ArrayXXi64(ny, nx);
  for (std::int64_t iy = 0; iy < ny; ++iy) {
    Tokens row(path, static_cast<int>(iy) + 3, lines[iy + 2]);
    for (std::int64_t ix = 0; ix < nx; ++ix) {
      std::int64_t v = row.next_int("count");
      if (v < 0) parse_fail(path, static_cast<int>(iy) + 3, "negative count");
      out.counts(iy, ix) = v;
    }
    row.expect_end();
  }
  return out;
}

FrameSet assemble_frames(const FrameChannel& plus, const FrameChannel& minus,
                         double fov_half_width) {
  if (plus.channel != Channel::plus || minus.channel != Channel::minus)
    throw std::invalid_argument(
        "assemble_frames: arguments must be the + and - channel in order");
  if (plus.nx != minus.nx || plus.ny != minus.ny)
    throw std::invalid_argument("assemble_frames: frame dimensions differ");
  if (!plus.setting.same_as(minus.setting))
    throw std::invalid_argument("assemble_frames: frame settings differ");
  if (!(fov_half_width > 0.0))
    throw std::invalid_argument("assemble_frames: fov_half_width must be > 0");

  FrameGrid grid{plus.nx, plus.ny, fov_half_width};
  FrameSet fs = FrameSet::zeros(grid, plus.setting);
  fs.counts_plus = plus.counts;
  fs.counts_minus = minus.counts;
  return fs;
}

void write_event_log(const std::string& path,
                     const std::vector<TrialEvent>& events, bool gzip) {
  std::ostringstream out;
  for (const TrialEvent& ev : events) {
    out << ev.trial_id << ' ' << int(ev.bucket_click) << ' ' << int(ev.readout)
        << ' ' << ev.channel << ' ' << ev.bin_x << ' ' << ev.bin_y << ' '
        << int(ev.from_noise) << '\n';
  }
  write_text_file(path, out.str(), gzip);
}

std::vector<TrialEvent> read_event_log(const std::string& path) {
  std::vector<std::string> lines = split_lines(read_text_file(path));
  std::vector<TrialEvent> events;
  events.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    Tokens tok(path, static_cast<int>(i) + 1, lines[i]);
    TrialEvent ev;
    ev.trial_id = tok.next_int("trial_id");
    ev.bucket_click = tok.next_int("bucket") != 0;
    ev.readout = tok.next_int("readout") != 0;
    std::int64_t ch = tok.next_int("channel");
    if (ch < -1 || ch > 1)
      parse_fail(path, static_cast<int>(i) + 1, "bad channel");
    ev.channel = static_cast<int>(ch);
    ev.bin_x = static_cast<int>(tok.next_int("bin_x"));
    ev.bin_y = static_cast<int>(tok.next_int("bin_y"));
    ev.from_noise = tok.next_int("noise") != 0;
    tok.expect_end();
    events.push_back(ev);
  }
  return events;
}

std::string render_bell_report(const BellReport& report) {
  std::ostringstream out;
  auto kv = [&](const char* key, double v) {
    out << key << " = " << format_g17(v) << '\n';
  };
  for (int j = 0; j < 4; ++j) {
    std::string base = "visibility_" + std::to_string(j + 1);
    const Setting& s = report.settings[j];
    out << base << "_setting = " << format_g17(s.theta_s()) << ' '
        << format_g17(s.theta_i()) << '\n';
    kv((base).c_str(), report.visibilities[j].value);
    kv((base + "_err").c_str(), report.visibilities[j].error);
  }
  kv("c_marginal", report.c_marginal.value);
  kv("c_marginal_err", report.c_marginal.error);
  kv("s_chsh", report.s_chsh.value);
  kv("s_chsh_err", report.s_chsh.error);
  kv("s_chsh_raw", report.s_chsh_raw.value);
  kv("s_chsh_raw_err", report.s_chsh_raw.error);
  kv("s_freedman", report.s_freedman.value);
  kv("s_freedman_err", report.s_freedman.error);
  kv("v_freedman", report.v_freedman.value);
  kv("v_freedman_err", report.v_freedman.error);
  kv("sd_violation_chsh", report.sd_violation_chsh);
  kv("sd_violation_freedman", report.sd_violation_freedman);
  kv("sd_violation", report.sd_violation_chsh);
  out << "[curve]\n# phi c c_err n\n";
  for (const PhaseBin& b : report.curve) {
    out << format_g17(b.phi) << ' ' << format_g17(b.c) << ' '
        << format_g17(b.c_err) << ' ' << b.n << '\n';
  }
  return out.str();
}

void write_bell_report(const std::string& path, const BellReport& report,
                       bool gzip) {
  write_text_file(path, render_bell_report(report), gzip);
}

}  // namespace ghostlab
