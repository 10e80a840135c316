#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "ghostlab/kspace.hpp"
#include "ghostlab/measurement.hpp"
#include "ghostlab/montecarlo.hpp"

namespace ghostlab {

struct ValueWithError {
  double value = 0.0;
  double error = 0.0;
};

// Per-bin two-port correlation C = (n+ - n-)/(n+ + n-). Bins with zero counts
// are masked; elsewhere |c| <= 1 and c_err is the binomial standard error
// sqrt((1 - c^2)/n). The raw per-port counts ride along so downstream fits can
// pool counts instead of averaging ratios.
struct CorrelationMap {
  FrameGrid grid;
  Setting setting = Setting::angles(0.0, 0.0);
  Eigen::ArrayXXd c;
  Eigen::ArrayXXd c_err;
  ArrayXXi64 n;
  ArrayXXi64 n_plus;
  ArrayXXi64 n_minus;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
};

// The two-FrameSet form supports frames loaded from per-channel files; the
// plus counts come from the first argument, the minus counts from the second.
// Grids and settings must match.
CorrelationMap correlation_map(const FrameSet& plus, const FrameSet& minus);
inline CorrelationMap correlation_map(const FrameSet& frames) {
  return correlation_map(frames, frames);
}

// Count-pooled constant correlation over the unmasked map (used for the
// marginal term, which is flat across the field of view).
ValueWithError pooled_c(const CorrelationMap& map);

enum class Axis { x, y };

// Weighted least-squares fit of V*cos(model_phase + offset) to the
// count-pooled correlation averaged over `average_axis` (default: average
// over kx, fit the fringe along ky). The model phase is evaluated along the
// kept axis with the averaged coordinate at the field-of-view centre, so it
// must not vary along the averaged axis. V is clipped to [0, 1.05] with
// `clipped` set when the raw estimate fell outside.
struct FringeFit {
  double visibility = 0.0;
  double visibility_err = 0.0;
  double offset = 0.0;
  double offset_err = 0.0;
  int n_points = 0;
  bool clipped = false;
};

FringeFit fringe_fit(const CorrelationMap& map, const PhaseProfile& model_phase,
                     Axis average_axis = Axis::x);

// Hybrid CHSH combination
//   S = C1 - C2 + C3 + C4 - 2*C_inf
// evaluated where the analyzer settings are optimal. With cosine fringes of
// per-setting visibilities V_j this reduces to S = (V1+V2+V3+V4)/sqrt(2) -
// 2*C_inf; errors add in quadrature.
struct ChshResult {
  ValueWithError s;
  double sd_violation = 0.0;  // (s - 2)/error when s > 2, else 0
};

ChshResult bell_s_chsh(const std::array<ValueWithError, 4>& visibilities,
                       ValueWithError c_marginal);

// Same combination evaluated directly on counts: for each of the four maps
// the counts are pooled over bins whose joint phase sits within
// window_half_width of the optimum of the combination, then the four pooled
// correlations enter with their CHSH signs. The maps must carry the four
// settings {theta_s, theta_s + pi/2} x {theta_i, theta_i + pi/2}.
ChshResult bell_s_chsh_raw(const std::vector<CorrelationMap>& maps,
                           const PhaseProfile& joint_phase,
                           ValueWithError c_marginal,
                           double window_half_width = 0.17453292519943295);

// One point of the correlation-versus-phase curve extracted from a single
// frame set.
struct PhaseBin {
  double phi = 0.0;
  double c = 0.0;
  double c_err = 0.0;
  std::int64_t n = 0;
};

// Single-image Bell estimate: idler pixels are binned by the total programmed
// phase (joint profile plus analyzer offset) mod 2pi, C is computed per bin
// from pooled counts, an amplitude-only fit of V*cos(phi) is taken over the
// bins, and S = 2*sqrt(2)*V - 2*C_inf (the value of 3C(phi) - C(3phi) -
// 2C_inf at phi = pi/4 for a cosine curve). The total phase must span at
// least 2pi over the populated bins.
struct FreedmanResult {
  ValueWithError s;
  ValueWithError v;
  double sd_violation = 0.0;
  std::vector<PhaseBin> curve;
};

FreedmanResult bell_s_freedman(const FrameSet& frames,
                               const PhaseProfile& phase_s,
                               const PhaseProfile& phase_i,
                               ValueWithError c_marginal, int n_phase_bins = 36);

// Gaussian fits to the centre-of-mass histogram: one 1D fit per axis per
// channel (plus-x, plus-y, minus-x, minus-y), each sigma an estimate of the
// momentum anticorrelation width. kappa pools the four estimates; kappa_err
// is their sample standard deviation.
struct KappaFit {
  std::array<double, 4> estimates{};
  double kappa = 0.0;
  double kappa_err = 0.0;
};

KappaFit kappa_fit(const ComHistogram& hist);

// Local-hidden-variable bound on the hybrid combination. A model is a finite
// mixture of deterministic strategies lambda -> (d_inf, d_a, d_a', o_b, o_b')
// with detections obeying non-enhancement d <= d_inf; the combination is
// evaluated with every term normalized by the unpolarized detection rate,
// polarized terms carrying the fair-sampling factor 2. Returns the largest
// |S| seen; never exceeds 2 beyond floating-point rounding of the mixture
// averages.
double lhv_bound_oracle(int n_models, std::uint64_t seed);

// Exact maximum of the same combination over the 16 single-strategy models
// with d_inf = 1 (equals 2).
double lhv_exhaustive_max();

// Quantum value of the combination for cosine fringes: 2*sqrt(2)*v - 2*c_inf.
double quantum_s_closed_form(double visibility, double c_marginal);

// Everything the bell pipeline reports, serialized as the plain-text report.
struct BellReport {
  std::array<Setting, 4> settings{Setting::angles(0, 0), Setting::angles(0, 0),
                                  Setting::angles(0, 0), Setting::angles(0, 0)};
  std::array<ValueWithError, 4> visibilities{};
  ValueWithError c_marginal;
  ValueWithError s_chsh;
  ValueWithError s_chsh_raw;
  ValueWithError s_freedman;
  ValueWithError v_freedman;
  double sd_violation_chsh = 0.0;
  double sd_violation_freedman = 0.0;
  std::vector<PhaseBin> curve;
};

}  // namespace ghostlab
