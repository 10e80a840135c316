#include "ghostlab/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "ghostlab/errors.hpp"
#include "ghostlab/rng.hpp"

namespace ghostlab {

namespace {

// Stream-id tag separating the classical fringe generator from trial streams,
// so reusing one seed across both generators cannot alias their draws.
constexpr std::uint64_t kClassicalStreamBase = 1ull << 62;

int clamp_workers(int n_workers, std::int64_t n_trials) {
  if (n_workers < 1) throw std::invalid_argument("n_workers must be >= 1");
  return static_cast<int>(std::min<std::int64_t>(n_workers,
                                                 std::max<std::int64_t>(n_trials, 1)));
}

}  // namespace

bool FrameGrid::bin_of(KVector k, int& ix, int& iy) const {
  if (k.kx < -fov || k.kx > fov || k.ky < -fov || k.ky > fov) return false;
  ix = std::min(nx - 1, static_cast<int>((k.kx + fov) / cell_dx()));
  iy = std::min(ny - 1, static_cast<int>((k.ky + fov) / cell_dy()));
  return true;
}

KVector FrameGrid::center_of(int ix, int iy) const {
  return {-fov + (ix + 0.5) * cell_dx(), -fov + (iy + 0.5) * cell_dy()};
}

void NoiseModel::validate() const {
  auto prob = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
  };
  prob(p_pair, "p_pair");
  prob(chi_s, "chi_s");
  prob(chi_i, "chi_i");
  prob(zeta_s, "zeta_s");
  prob(zeta_i, "zeta_i");
  prob(visibility, "visibility");
  if (mean_signal_rate() > 1.0)
    throw std::invalid_argument("p_pair*chi_s + zeta_s must not exceed 1");
}

FrameSet FrameSet::zeros(const FrameGrid& grid, const Setting& setting) {
  FrameSet fs;
  fs.grid = grid;
  fs.setting = setting;
  fs.counts_plus = ArrayXXi64::Zero(grid.ny, grid.nx);
  fs.counts_minus = ArrayXXi64::Zero(grid.ny, grid.nx);
  return fs;
}

void FrameSet::merge(const FrameSet& other) {
  if (!grid.same_as(other.grid))
    throw std::invalid_argument("FrameSet::merge: incompatible grids");
  if (!setting.same_as(other.setting))
    throw std::invalid_argument("FrameSet::merge: incompatible settings");
  counts_plus += other.counts_plus;
  counts_minus += other.counts_minus;
  trials += other.trials;
  bucket_clicks += other.bucket_clicks;
  readouts += other.readouts;
}

namespace {

struct TrialContext {
  const BellEprState& state;
  const Setting& setting;
  const NoiseModel& noise;
  const FrameGrid& grid;
  RunMode mode;
  std::uint64_t seed;
  double bucket_r2;
  double fov;
  double p_multipair;
};

// One trial, one private RNG stream. Draws happen in a fixed order on each
// branch so the outcome depends only on (seed, trial_id).
void run_trial(const TrialContext& c, std::int64_t t, FrameSet& frames,
               std::vector<TrialEvent>& events) {
  CounterRng rng(c.seed, static_cast<std::uint64_t>(t));
  const NoiseModel& nm = c.noise;

  bool pair = rng.bernoulli(nm.p_pair);
  KVector ks{}, ki{};
  if (pair) {
    auto pr = sample_pair(c.state.params, rng);
    ks = pr.first;
    ki = pr.second;
  }

  bool pair_signal = false;
  if (pair) {
    bool aperture = ks.squared_norm() <= c.bucket_r2;
    bool analyzer =
        c.setting.is_marginal() ? true : rng.bernoulli(0.5);  // signal marginal
    pair_signal = aperture && analyzer && rng.bernoulli(nm.chi_s);
  }

  // O(p^2) double emission: an extra, uncorrelated pair that can both herald
  // and place an unrelated camera count.
  bool mp = rng.bernoulli(c.p_multipair);
  bool mp_signal = false;
  KVector mp_ki{};
  if (mp) {
    auto pr = sample_pair(c.state.params, rng);
    mp_ki = pr.second;
    bool aperture = pr.first.squared_norm() <= c.bucket_r2;
    bool analyzer = c.setting.is_marginal() ? true : rng.bernoulli(0.5);
    mp_signal = aperture && analyzer;
  }

  bool spurious_signal = rng.bernoulli(nm.zeta_s);
  bool bucket = pair_signal || mp_signal || spurious_signal;
  bool readout = (c.mode == RunMode::unconditional) || bucket;

  frames.trials += 1;
  if (bucket) frames.bucket_clicks += 1;
  if (readout) frames.readouts += 1;

  int channel = 0;
  int bx = -1, by = -1;
  bool from_noise = false;
  if (readout) {
    if (pair && rng.bernoulli(nm.chi_i)) {
      double p_plus = conditional_idler_prob(c.state, c.setting, ki,
                                             nm.visibility, Channel::plus);
      channel = rng.bernoulli(p_plus) ? +1 : -1;
      c.grid.bin_of(ki, bx, by);  // ki is sampled inside the FOV
    } else if (mp_signal) {
      channel = rng.bernoulli(0.5) ? +1 : -1;
      c.grid.bin_of(mp_ki, bx, by);
      from_noise = true;
    } else if (rng.bernoulli(nm.zeta_i)) {
      KVector k{rng.uniform(-c.fov, c.fov), rng.uniform(-c.fov, c.fov)};
      channel = rng.bernoulli(0.5) ? +1 : -1;
      c.grid.bin_of(k, bx, by);
      from_noise = true;
    }
  }

  if (channel > 0 && bx >= 0)
    frames.counts_plus(by, bx) += 1;
  else if (channel < 0 && bx >= 0)
    frames.counts_minus(by, bx) += 1;

  if (readout) {
    TrialEvent ev;
    ev.trial_id = t;
    ev.bucket_click = bucket;
    ev.readout = readout;
    ev.channel = channel;
    ev.bin_x = bx;
    ev.bin_y = by;
    ev.from_noise = from_noise;
    events.push_back(ev);
  }
}

}  // namespace

RunResult run_sequence(const BellEprState& state, const NoiseModel& noise,
                       const Setting& setting, std::int64_t n_trials,
                       std::uint64_t seed, int n_workers, RunMode mode,
                       const FrameGrid& grid) {
  if (n_trials < 0) throw std::invalid_argument("n_trials must be >= 0");
  state.params.validate();
  noise.validate();

  TrialContext ctx{state,
                   setting,
                   noise,
                   grid,
                   mode,
                   seed,
                   state.params.bucket_radius_k * state.params.bucket_radius_k,
                   state.params.fov_half_width,
                   noise.p_pair * noise.p_pair * noise.chi_s * noise.chi_i};

  int workers = clamp_workers(n_workers, n_trials);
  std::vector<FrameSet> partial(workers, FrameSet::zeros(grid, setting));
  std::vector<std::vector<TrialEvent>> partial_events(workers);

  double event_rate = mode == RunMode::unconditional
                          ? 1.0
                          : std::min(1.0, noise.mean_signal_rate() * 1.3 + 1e-3);
  auto work = [&](int w) {
    std::int64_t lo = n_trials * w / workers;
    std::int64_t hi = n_trials * (w + 1) / workers;
    partial_events[w].reserve(static_cast<std::size_t>((hi - lo) * event_rate));
    for (std::int64_t t = lo; t < hi; ++t)
      run_trial(ctx, t, partial[w], partial_events[w]);
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }

  RunResult out;
  out.frames = FrameSet::zeros(grid, setting);
  std::size_t n_events = 0;
  for (const auto& ev : partial_events) n_events += ev.size();
  out.events.reserve(n_events);
  for (int w = 0; w < workers; ++w) {  // chunk order == trial order
    out.frames.merge(partial[w]);
    out.events.insert(out.events.end(), partial_events[w].begin(),
                      partial_events[w].end());
  }
  return out;
}

std::vector<FringeFrame> run_classical_fringes(
    const BellEprState& state, const std::vector<Setting>& setting_sweep,
    double mean_intensity, double visibility, std::uint64_t seed,
    const FrameGrid& grid) {
  if (mean_intensity < 0.0)
    throw std::invalid_argument("mean_intensity must be >= 0");
  state.params.validate();

  std::vector<FringeFrame> frames;
  frames.reserve(setting_sweep.size());
  for (std::size_t j = 0; j < setting_sweep.size(); ++j) {
    const Setting& setting = setting_sweep[j];
    FringeFrame fr;
    fr.theta = setting.is_marginal()
                   ? 0.0
                   : setting.theta_s() - setting.theta_i();
    fr.intensity_plus = Eigen::ArrayXXd::Zero(grid.ny, grid.nx);
    fr.intensity_minus = Eigen::ArrayXXd::Zero(grid.ny, grid.nx);
    for (int iy = 0; iy < grid.ny; ++iy) {
      for (int ix = 0; ix < grid.nx; ++ix) {
        std::uint64_t stream = kClassicalStreamBase +
                               (static_cast<std::uint64_t>(j) << 32) +
                               static_cast<std::uint64_t>(iy * grid.nx + ix);
        CounterRng rng(seed, stream);
        KVector ki = grid.center_of(ix, iy);
        double p_plus =
            conditional_idler_prob(state, setting, ki, visibility, Channel::plus);
        fr.intensity_plus(iy, ix) =
            static_cast<double>(rng.poisson(mean_intensity * p_plus));
        fr.intensity_minus(iy, ix) =
            static_cast<double>(rng.poisson(mean_intensity * (1.0 - p_plus)));
      }
    }
    frames.push_back(std::move(fr));
  }
  return frames;
}

G2Estimate estimate_g2(const std::vector<TrialEvent>& events,
                       std::int64_t n_trials, const NoiseModel& noise) {
  if (n_trials <= 0) throw std::invalid_argument("n_trials must be > 0");
  G2Estimate est;
  est.n_trials = n_trials;
  for (const auto& ev : events) {
    bool idler = ev.channel != 0;
    if (ev.bucket_click) est.n_signal += 1;
    if (idler) est.n_idler += 1;
    if (ev.bucket_click && idler) est.n_coinc += 1;
  }
  if (est.n_signal == 0 || est.n_idler == 0 || est.n_coinc == 0)
    throw InsufficientDataError(
        "estimate_g2: too few counts (signal=" + std::to_string(est.n_signal) +
        ", idler=" + std::to_string(est.n_idler) +
        ", coincidence=" + std::to_string(est.n_coinc) + ")");

  double n = static_cast<double>(n_trials);
  est.g2 = static_cast<double>(est.n_coinc) * n /
           (static_cast<double>(est.n_signal) * static_cast<double>(est.n_idler));
  est.g2_err = est.g2 * std::sqrt(1.0 / est.n_coinc + 1.0 / est.n_signal +
                                  1.0 / est.n_idler);

  auto accidental_model = [](double x) { return 1.0 + 1.0 / x; };
  if (noise.chi_s > 0.0 && noise.chi_i > 0.0) {
    est.model_from_params = accidental_model(
        noise.p_pair + noise.zeta_s / noise.chi_s + noise.zeta_i / noise.chi_i);
    double nbar_s = static_cast<double>(est.n_signal) / n;
    est.model_from_rates =
        accidental_model(nbar_s / noise.chi_s + noise.zeta_i / noise.chi_i);
  }
  return est;
}

RateReport rate_report(const NoiseModel& noise, double trial_rate_hz,
                       double duty, double delay_s, double memory_halflife_s) {
  if (trial_rate_hz < 0.0) throw std::invalid_argument("trial_rate_hz must be >= 0");
  if (!(duty >= 0.0 && duty <= 1.0))
    throw std::invalid_argument("duty must lie in [0, 1]");
  if (delay_s < 0.0) throw std::invalid_argument("delay_s must be >= 0");
  if (memory_halflife_s <= 0.0)
    throw std::invalid_argument("memory_halflife_s must be > 0");
  noise.validate();

  RateReport r;
  r.trial_rate_hz = trial_rate_hz;
  r.duty = duty;
  r.delay_s = delay_s;
  r.memory_halflife_s = memory_halflife_s;
  r.coincidence_prob = noise.p_pair * noise.chi_s * noise.chi_i;
  r.retention = std::exp2(-delay_s / memory_halflife_s);
  r.instantaneous_cps = trial_rate_hz * r.coincidence_prob * r.retention;
  r.average_cps = r.instantaneous_cps * duty;
  return r;
}

ComHistogram run_com_histogram(const BellEprState& state, const Setting& setting,
                               const NoiseModel& noise, std::int64_t n_trials,
                               std::uint64_t seed, int bins, double extent) {
  if (bins < 2) throw std::invalid_argument("bins must be >= 2");
  state.params.validate();
  noise.validate();
  if (extent <= 0.0) extent = 6.0 * state.params.kappa;

  ComHistogram h;
  h.bins = bins;
  h.extent = extent;
  h.plus = ArrayXXi64::Zero(bins, bins);
  h.minus = ArrayXXi64::Zero(bins, bins);
  h.trials = n_trials;

  double cell = h.cell();
  for (std::int64_t t = 0; t < n_trials; ++t) {
    CounterRng rng(seed, static_cast<std::uint64_t>(t));
    if (!rng.bernoulli(noise.p_pair)) continue;
    auto pr = sample_pair(state.params, rng);
    if (!rng.bernoulli(noise.chi_s * noise.chi_i)) continue;
    double p_plus = conditional_idler_prob(state, setting, pr.second,
                                           noise.visibility, Channel::plus);
    bool plus = rng.bernoulli(p_plus);
    KVector com = pr.first + pr.second;
    if (com.kx < -extent || com.kx >= extent || com.ky < -extent ||
        com.ky >= extent)
      continue;
    int ix = static_cast<int>((com.kx + extent) / cell);
    int iy = static_cast<int>((com.ky + extent) / cell);
    ix = std::min(ix, bins - 1);
    iy = std::min(iy, bins - 1);
    (plus ? h.plus : h.minus)(iy, ix) += 1;
  }
  return h;
}

}  // namespace ghostlab
