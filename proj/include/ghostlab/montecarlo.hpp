#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ghostlab/kspace.hpp"
#include "ghostlab/measurement.hpp"

namespace ghostlab {

using ArrayXXi64 = Eigen::Array<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

// Camera binning over the square field of view [-fov, fov]^2.
struct FrameGrid {
  int nx = 64;
  int ny = 64;
  double fov = 25.0;

  double cell_dx() const { return 2.0 * fov / nx; }
  double cell_dy() const { return 2.0 * fov / ny; }

  // Bin containing k; false if k lies outside the field of view. The upper
  // edge maps into the last bin.
  bool bin_of(KVector k, int& ix, int& iy) const;
  KVector center_of(int ix, int iy) const;

  bool same_as(const FrameGrid& o) const {
    return nx == o.nx && ny == o.ny && fov == o.fov;
  }
};

// Event-level noise and efficiency model for one trial.
//
//   p_pair  probability that the source emits a pair
//   chi_s   heralding (signal) detection efficiency
//   chi_i   idler camera detection efficiency
//   zeta_s  spurious bucket-click probability
//   zeta_i  spurious idler-count probability per readout
//   visibility  apparatus visibility fed to the closed-form channel
//               probability (static optics contrast etc.); noise-induced
//               visibility loss is not set here, it emerges from the counts
//
// Consistency hook: the unconditioned mean signal rate is
// p_pair*chi_s + zeta_s.
struct NoiseModel {
  double p_pair = 0.05;
  double chi_s = 0.075;
  double chi_i = 1.0;
  double zeta_s = 0.0;
  double zeta_i = 0.0;
  double visibility = 1.0;

  void validate() const;
  double mean_signal_rate() const { return p_pair * chi_s + zeta_s; }
};

// One triggering trial. channel is +1/-1 for a camera count in that analyzer
// port, 0 when the readout produced no count; from_noise marks counts not
// originating from the heralded pair. In feedback mode readout == bucket_click
// by construction.
struct TrialEvent {
  std::int64_t trial_id = 0;
  bool bucket_click = false;
  bool readout = false;
  int channel = 0;
  int bin_x = -1;
  int bin_y = -1;
  bool from_noise = false;
};

// Accumulated camera frames for one analyzer setting, one histogram per port.
// Arrays are indexed (row = y bin, col = x bin). At most one camera count is
// recorded per trial, so sum(counts) <= readouts <= trials and the int64 bins
// cannot overflow.
struct FrameSet {
  FrameGrid grid;
  Setting setting = Setting::angles(0.0, 0.0);
  ArrayXXi64 counts_plus;
  ArrayXXi64 counts_minus;
  std::int64_t trials = 0;
  std::int64_t bucket_clicks = 0;
  std::int64_t readouts = 0;

  static FrameSet zeros(const FrameGrid& grid, const Setting& setting);
  void merge(const FrameSet& other);
  std::int64_t total_counts() const {
    return counts_plus.sum() + counts_minus.sum();
  }
};

enum class RunMode {
  feedback,       // readout fired only on a bucket click
  unconditional,  // diagnostic: readout every trial (g2 estimation)
};

struct RunResult {
  FrameSet frames;
  std::vector<TrialEvent> events;
};

// Run n_trials of the heralded sequence. Per trial: the source emits a pair
// with probability p_pair; the signal is detected if it falls inside the
// bucket aperture, passes the signal analyzer (probability 1/2, the marginal
// of the projection; marginal settings always pass) and survives chi_s;
// spurious bucket clicks fire independently with zeta_s; pair emission at
// O(p^2) is emulated by an independent uncorrelated pair with probability
// p_pair^2*chi_s*chi_i whose idler lands uniformly. A readout (feedback mode:
// iff the bucket clicked) records at most one camera count, drawn in priority
// order heralded pair (chi_i, channel from conditional_idler_prob),
// uncorrelated pair, spurious count (zeta_i, uniform, even odds per port).
//
// Each trial consumes its own counter-based stream keyed by (seed, trial id),
// so results are bit-identical for any n_workers and any thread schedule;
// events come back sorted by trial id. Thread safety: workers share nothing
// but the immutable inputs.
RunResult run_sequence(const BellEprState& state, const NoiseModel& noise,
                       const Setting& setting, std::int64_t n_trials,
                       std::uint64_t seed, int n_workers = 1,
                       RunMode mode = RunMode::feedback,
                       const FrameGrid& grid = FrameGrid{});

// Classical interference sweep: for each analyzer setting the two port
// intensities at pixel ki follow Poisson draws with means
//   mean_intensity * conditional_idler_prob(state, setting, ki, v, +/-),
// i.e. noiseless-limit fringes of the joint phase, shot noise on top. theta
// records the frame's global analyzer phase theta_s - theta_i; frames feed the
// interferometric phase-retrieval path.
struct FringeFrame {
  Eigen::ArrayXXd intensity_plus;
  Eigen::ArrayXXd intensity_minus;
  double theta = 0.0;
};

std::vector<FringeFrame> run_classical_fringes(
    const BellEprState& state, const std::vector<Setting>& setting_sweep,
    double mean_intensity, double visibility, std::uint64_t seed,
    const FrameGrid& grid = FrameGrid{});

// Second-order cross-correlation estimate from an unconditioned run
// (RunMode::unconditional, marginal setting):
//   g2 = P(signal & idler) / (P(signal) P(idler)).
// The error is binomial propagation treating the three tallies as
// independent. Also evaluates the analytic accidentals model
//   1 + 1/(p + zeta_s/chi_s + zeta_i/chi_i)        (from parameters)
//   1 + 1/(nbar_s/chi_s + zeta_i/chi_i)            (from the measured rate)
struct G2Estimate {
  double g2 = 0.0;
  double g2_err = 0.0;
  double model_from_params = 0.0;
  double model_from_rates = 0.0;
  std::int64_t n_trials = 0;
  std::int64_t n_signal = 0;
  std::int64_t n_idler = 0;
  std::int64_t n_coinc = 0;
};

G2Estimate estimate_g2(const std::vector<TrialEvent>& events,
                       std::int64_t n_trials, const NoiseModel& noise);

// Detected-coincidence rate bookkeeping:
//   per-trial coincidence probability = p_pair * chi_s * chi_i
//   instantaneous cps = trial_rate * that * retention(delay)
//   average cps       = instantaneous * duty
//   retention(t)      = 2^(-t / memory_halflife)
struct RateReport {
  double coincidence_prob = 0.0;
  double retention = 1.0;
  double instantaneous_cps = 0.0;
  double average_cps = 0.0;
  double trial_rate_hz = 0.0;
  double duty = 1.0;
  double delay_s = 0.0;
  double memory_halflife_s = 0.0;
};

RateReport rate_report(const NoiseModel& noise, double trial_rate_hz,
                       double duty, double delay_s, double memory_halflife_s);

// Diagnostic with the bucket replaced by a camera: histogram of the pair
// centre-of-mass coordinate ks + ki, one histogram per analyzer port, over
// [-extent, extent]^2. Spurious counts contribute an uncorrelated background.
struct ComHistogram {
  int bins = 96;
  double extent = 0.0;
  ArrayXXi64 plus;
  ArrayXXi64 minus;
  std::int64_t trials = 0;

  double cell() const { return 2.0 * extent / bins; }
  double axis_coord(int i) const { return -extent + (i + 0.5) * cell(); }
};

ComHistogram run_com_histogram(const BellEprState& state, const Setting& setting,
                               const NoiseModel& noise, std::int64_t n_trials,
                               std::uint64_t seed, int bins = 96,
                               double extent = 0.0 /* 0 = 6 kappa */);

}  // namespace ghostlab
