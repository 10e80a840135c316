#pragma once

#include <string>
#include <vector>

#include "ghostlab/kspace.hpp"
#include "ghostlab/measurement.hpp"
#include "ghostlab/montecarlo.hpp"

namespace ghostlab {

// Full run description. Parsed from plain-text configs with [source] [noise]
// [phases] [run] sections; every key validated at parse time, unknown keys
// rejected with file:line diagnostics.
struct RunConfig {
  BiphotonParams source;
  NoiseModel noise;
  PhaseProfile phase_s = PhaseProfile::linear(0.0, 0.0124, 0.0);
  PhaseProfile phase_i = PhaseProfile::linear(0.0, 0.38, 0.0);

  std::int64_t n_trials = 20000000;
  std::uint64_t seed = 12;
  int bins_x = 64;
  int bins_y = 64;
  std::vector<Setting> settings;
  int workers = 1;
  bool gzip = false;
  std::string out_dir = ".";

  // Sequence bookkeeping for the rate report.
  double trial_rate_hz = 32000.0;
  double duty = 0.10;
  double readout_delay_s = 45e-6;
  double memory_halflife_s = 45e-6;

  FrameGrid grid() const {
    return FrameGrid{bins_x, bins_y, source.fov_half_width};
  }
};

// The operating point used throughout: pair probability 5%, heralding
// efficiency 7.5%, idler spurious fraction 4e-3 of the camera efficiency,
// kappa = 5.9, fold displacement 286 with residual mismatch 0.5*kappa, and
// the five-setting sweep {0, pi/2} x {0, pi/2} plus the marginal.
RunConfig default_config();

// Parses `text`; `path` is used in diagnostics only. Phase profiles may be
// inline (`phase_s = linear <sx> <sy> <off>`) or external (`phase_s = file
// <path>`, resolved relative to the config's directory).
RunConfig parse_config(const std::string& text, const std::string& path);
RunConfig load_config(const std::string& path);

// Canonical serialization of a config (used to ship the default).
std::string render_config(const RunConfig& config);

}  // namespace ghostlab
