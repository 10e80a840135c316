#include "ghostlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ghostlab/errors.hpp"
#include "ghostlab/rng.hpp"

namespace ghostlab {

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_pm_pi(double a) {
  double w = std::remainder(a, 2.0 * kPi);
  return w;  // (-pi, pi]
}

double wrap_two_pi_local(double a) {
  double w = std::fmod(a, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  return w;
}

// Binomial variance of C with a floor so that saturated bins (|C| = 1) still
// carry finite weight in fits.
double floored_c_variance(double c, double n) {
  double one_minus_c2 = std::max(1.0 - c * c, 1.0 / (n + 1.0));
  return one_minus_c2 / n;
}

struct PooledCounts {
  std::int64_t n_plus = 0;
  std::int64_t n_minus = 0;
  std::int64_t n() const { return n_plus + n_minus; }
  double c() const {
    return static_cast<double>(n_plus - n_minus) / static_cast<double>(n());
  }
  double err() const {
    double cc = c();
    return std::sqrt(std::max(1.0 - cc * cc, 0.0) / static_cast<double>(n()));
  }
};

}  // namespace

CorrelationMap correlation_map(const FrameSet& plus, const FrameSet& minus) {
  if (!plus.grid.same_as(minus.grid))
    throw std::invalid_argument("correlation_map: frame grids differ");
  if (!plus.setting.same_as(minus.setting))
    throw std::invalid_argument("correlation_map: frame settings differ");

  CorrelationMap m;
  m.grid = plus.grid;
  m.setting = plus.setting;
  m.n_plus = plus.counts_plus;
  m.n_minus = minus.counts_minus;
  m.n = m.n_plus + m.n_minus;
  m.mask = m.n > 0;

  Eigen::ArrayXXd nd = m.n.cast<double>().max(1.0);
  m.c = (m.n_plus - m.n_minus).cast<double>() / nd;
  m.c_err = m.mask.select(((1.0 - m.c.square()).max(0.0) / nd).sqrt(),
                          Eigen::ArrayXXd::Zero(m.grid.ny, m.grid.nx));
  return m;
}

ValueWithError pooled_c(const CorrelationMap& map) {
  PooledCounts pool{map.n_plus.sum(), map.n_minus.sum()};
  if (pool.n() == 0)
    throw InsufficientDataError("pooled correlation: map has no counts");
  return {pool.c(), pool.err()};
}

FringeFit fringe_fit(const CorrelationMap& map, const PhaseProfile& model_phase,
                     Axis average_axis) {
  int n_rows = average_axis == Axis::x ? map.grid.ny : map.grid.nx;
  int n_cols = average_axis == Axis::x ? map.grid.nx : map.grid.ny;

  std::vector<double> phi, c, var;
  phi.reserve(n_rows);
  for (int r = 0; r < n_rows; ++r) {
    PooledCounts pool;
    for (int j = 0; j < n_cols; ++j) {
      int ix = average_axis == Axis::x ? j : r;
      int iy = average_axis == Axis::x ? r : j;
      if (!map.mask(iy, ix)) continue;
      pool.n_plus += map.n_plus(iy, ix);
      pool.n_minus += map.n_minus(iy, ix);
    }
    if (pool.n() == 0) continue;
    KVector centre = average_axis == Axis::x ? map.grid.center_of(0, r)
                                             : map.grid.center_of(r, 0);
    KVector k = average_axis == Axis::x ? KVector{0.0, centre.ky}
                                        : KVector{centre.kx, 0.0};
    phi.push_back(model_phase(k));
    c.push_back(pool.c());
    var.push_back(floored_c_variance(pool.c(), static_cast<double>(pool.n())));
  }

  if (phi.size() < 5)
    throw InsufficientDataError(
        "fringe fit needs at least 5 averaged points with counts, got " +
        std::to_string(phi.size()));

  // Linear form: C = A cos(phi) + B sin(phi), V = |(A,B)|, offset = atan2(-B,A).
  double scc = 0, scs = 0, sss = 0, bc = 0, bs = 0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    double w = 1.0 / var[i];
    double co = std::cos(phi[i]);
    double si = std::sin(phi[i]);
    scc += w * co * co;
    scs += w * co * si;
    sss += w * si * si;
    bc += w * c[i] * co;
    bs += w * c[i] * si;
  }
  double det = scc * sss - scs * scs;
  if (!(det > 1e-12 * std::max(scc * sss, 1.0)))
    throw NumericError(
        "fringe fit is degenerate: model phase span too small across points");

  double a = (sss * bc - scs * bs) / det;
  double b = (scc * bs - scs * bc) / det;
  double cov_aa = sss / det;
  double cov_bb = scc / det;
  double cov_ab = -scs / det;

  FringeFit fit;
  fit.n_points = static_cast<int>(phi.size());
  double v = std::hypot(a, b);
  fit.offset = std::atan2(-b, a);
  if (v > 1e-30) {
    fit.visibility_err = std::sqrt(std::max(
        (a * a * cov_aa + 2.0 * a * b * cov_ab + b * b * cov_bb) / (v * v), 0.0));
    fit.offset_err = std::sqrt(std::max(
        (b * b * cov_aa - 2.0 * a * b * cov_ab + a * a * cov_bb) / (v * v * v * v),
        0.0));
  } else {
    fit.visibility_err = std::sqrt(std::max(cov_aa + cov_bb, 0.0));
    fit.offset_err = kPi;
  }
  if (v > 1.05) {
    v = 1.05;
    fit.clipped = true;
  }
  fit.visibility = v;
  return fit;
}

ChshResult bell_s_chsh(const std::array<ValueWithError, 4>& visibilities,
                       ValueWithError c_marginal) {
  double sum_v = 0.0, var = 0.0;
  for (const auto& v : visibilities) {
    sum_v += v.value;
    var += v.error * v.error / 2.0;  // (err/sqrt(2))^2
  }
  var += 4.0 * c_marginal.error * c_marginal.error;

  ChshResult r;
  r.s.value = sum_v / std::sqrt(2.0) - 2.0 * c_marginal.value;
  r.s.error = std::sqrt(var);
  if (r.s.value > 2.0 && r.s.error > 0.0)
    r.sd_violation = (r.s.value - 2.0) / r.s.error;
  return r;
}

namespace {

// Identify the CHSH base angles: two distinct values per side, the pair
// ordered so that base + pi/2 (mod 2pi) equals the partner.
std::pair<double, double> chsh_base(std::vector<double> angles,
                                    const char* side) {
  std::sort(angles.begin(), angles.end());
  angles.erase(std::unique(angles.begin(), angles.end(),
                           [](double x, double y) {
                             return std::abs(x - y) < 1e-9;
                           }),
               angles.end());
  if (angles.size() != 2)
    throw std::invalid_argument(std::string("bell_s_chsh_raw: expected two "
                                            "distinct ") +
                                side + " angles");
  double lo = angles[0], hi = angles[1];
  if (std::abs(wrap_two_pi_local(lo + kPi / 2.0) - hi) < 1e-9) return {lo, hi};
  if (std::abs(wrap_two_pi_local(hi + kPi / 2.0) - lo) < 1e-9) return {hi, lo};
  throw std::invalid_argument(std::string("bell_s_chsh_raw: ") + side +
                              " angles are not pi/2 apart");
}

}  // namespace

ChshResult bell_s_chsh_raw(const std::vector<CorrelationMap>& maps,
                           const PhaseProfile& joint_phase,
                           ValueWithError c_marginal,
                           double window_half_width) {
  if (maps.size() != 4)
    throw std::invalid_argument("bell_s_chsh_raw: expected four maps");
  for (const auto& m : maps) {
    if (m.setting.is_marginal())
      throw std::invalid_argument("bell_s_chsh_raw: maps must be non-marginal");
    if (!m.grid.same_as(maps[0].grid))
      throw std::invalid_argument("bell_s_chsh_raw: map grids differ");
  }

  std::vector<double> s_angles, i_angles;
  for (const auto& m : maps) {
    s_angles.push_back(m.setting.theta_s());
    i_angles.push_back(m.setting.theta_i());
  }
  auto [ts, tsp] = chsh_base(s_angles, "signal");
  auto [ti, tip] = chsh_base(i_angles, "idler");

  // S = C(ts,ti) - C(ts,ti') + C(ts',ti) + C(ts',ti') - 2 C_inf over one
  // fixed wavevector region. Every map's fringe is V cos(phi + theta_s -
  // theta_i), so with the region chosen where phi + ts - ti = -pi/4 the four
  // terms line up at the Tsirelson combination 2 sqrt(2) V. The same pixels
  // feed all four terms; only the window choice uses the base angles.
  auto term_index = [&](double a, double b) -> int {
    for (std::size_t m = 0; m < maps.size(); ++m)
      if (std::abs(maps[m].setting.theta_s() - a) < 1e-9 &&
          std::abs(maps[m].setting.theta_i() - b) < 1e-9)
        return static_cast<int>(m);
    throw std::invalid_argument(
        "bell_s_chsh_raw: settings do not form a {theta, theta+pi/2} grid");
  };
  int idx[4] = {term_index(ts, ti), term_index(ts, tip), term_index(tsp, ti),
                term_index(tsp, tip)};
  double sign[4] = {+1.0, -1.0, +1.0, +1.0};

  const FrameGrid& grid = maps[0].grid;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> window(grid.ny, grid.nx);
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      double psi = joint_phase(grid.center_of(ix, iy)) + ts - ti;
      window(iy, ix) = std::abs(wrap_pm_pi(psi + kPi / 4.0)) <= window_half_width;
    }
  }

  double s_val = -2.0 * c_marginal.value;
  double var = 4.0 * c_marginal.error * c_marginal.error;
  for (int t = 0; t < 4; ++t) {
    const CorrelationMap& m = maps[idx[t]];
    PooledCounts pool;
    for (int iy = 0; iy < grid.ny; ++iy) {
      for (int ix = 0; ix < grid.nx; ++ix) {
        if (!window(iy, ix) || !m.mask(iy, ix)) continue;
        pool.n_plus += m.n_plus(iy, ix);
        pool.n_minus += m.n_minus(iy, ix);
      }
    }
    if (pool.n() == 0)
      throw InsufficientDataError(
          "bell_s_chsh_raw: no counts in the optimal-phase window");
    s_val += sign[t] * pool.c();
    var += floored_c_variance(pool.c(), static_cast<double>(pool.n()));
  }

  ChshResult r;
  r.s = {s_val, std::sqrt(var)};
  if (r.s.value > 2.0 && r.s.error > 0.0)
    r.sd_violation = (r.s.value - 2.0) / r.s.error;
  return r;
}

FreedmanResult bell_s_freedman(const FrameSet& frames,
                               const PhaseProfile& phase_s,
                               const PhaseProfile& phase_i,
                               ValueWithError c_marginal, int n_phase_bins) {
  if (n_phase_bins < 4)
    throw std::invalid_argument("bell_s_freedman: need at least 4 phase bins");
  if (frames.setting.is_marginal())
    throw std::invalid_argument(
        "bell_s_freedman: frames must carry a finite analyzer setting");

  const FrameGrid& grid = frames.grid;
  double shift = frames.setting.theta_s() - frames.setting.theta_i();

  // Total programmed phase per pixel; its span must cover a full turn or the
  // amplitude fit is unconstrained.
  double span_lo = 0.0, span_hi = 0.0;
  bool any = false;
  Eigen::ArrayXXd phase_tot(grid.ny, grid.nx);
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      KVector ki = grid.center_of(ix, iy);
      double phi = phase_s(KVector{-ki.kx, -ki.ky}) - phase_i(ki) + shift;
      phase_tot(iy, ix) = phi;
      if (frames.counts_plus(iy, ix) + frames.counts_minus(iy, ix) == 0)
        continue;
      if (!any) {
        span_lo = span_hi = phi;
        any = true;
      } else {
        span_lo = std::min(span_lo, phi);
        span_hi = std::max(span_hi, phi);
      }
    }
  }
  if (!any || span_hi - span_lo < 2.0 * kPi)
    throw InsufficientDataError(
        "bell_s_freedman: joint phase spans less than 2*pi over populated "
        "bins (span = " +
        std::to_string(any ? span_hi - span_lo : 0.0) + " rad)");

  double width = 2.0 * kPi / n_phase_bins;
  std::vector<PooledCounts> bins(n_phase_bins);
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      std::int64_t np = frames.counts_plus(iy, ix);
      std::int64_t nm = frames.counts_minus(iy, ix);
      if (np + nm == 0) continue;
      int b = std::min(n_phase_bins - 1,
                       static_cast<int>(wrap_two_pi_local(phase_tot(iy, ix)) /
                                        width));
      bins[b].n_plus += np;
      bins[b].n_minus += nm;
    }
  }

  FreedmanResult res;
  res.curve.resize(n_phase_bins);
  double sw = 0.0, swc = 0.0;
  int populated = 0;
  for (int b = 0; b < n_phase_bins; ++b) {
    PhaseBin& out = res.curve[b];
    out.phi = (b + 0.5) * width;
    out.n = bins[b].n();
    if (out.n == 0) continue;
    ++populated;
    out.c = bins[b].c();
    out.c_err = bins[b].err();
    double w = 1.0 / floored_c_variance(out.c, static_cast<double>(out.n));
    double co = std::cos(out.phi);
    sw += w * co * co;
    swc += w * out.c * co;
  }
  if (populated < 5)
    throw InsufficientDataError(
        "bell_s_freedman: fewer than 5 populated phase bins");

  res.v.value = swc / sw;
  res.v.error = 1.0 / std::sqrt(sw);
  res.s.value = 2.0 * std::sqrt(2.0) * res.v.value - 2.0 * c_marginal.value;
  res.s.error = std::sqrt(8.0 * res.v.error * res.v.error +
                          4.0 * c_marginal.error * c_marginal.error);
  if (res.s.value > 2.0 && res.s.error > 0.0)
    res.sd_violation = (res.s.value - 2.0) / res.s.error;
  return res;
}

namespace {

struct Gauss1D {
  double a = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
};

// Damped Gauss-Newton on a*exp(-(x-mu)^2/(2 sigma^2)) with Poisson-like
// weights 1/max(y,1).
Gauss1D fit_gaussian_1d(const Eigen::ArrayXd& x, const Eigen::ArrayXd& y) {
  double tot = y.sum();
  if (tot <= 0.0)
    throw InsufficientDataError("kappa fit: empty histogram projection");
  double mu = (x * y).sum() / tot;
  double var = ((x - mu).square() * y).sum() / tot;
  if (var <= 0.0) throw NumericError("kappa fit: degenerate histogram");

  Eigen::Vector3d p(y.maxCoeff(), mu, std::sqrt(var));
  Eigen::ArrayXd w = y.max(1.0).inverse();

  auto chi2_of = [&](const Eigen::Vector3d& q) {
    Eigen::ArrayXd m = q[0] * (-(x - q[1]).square() / (2.0 * q[2] * q[2])).exp();
    return (w * (y - m).square()).sum();
  };

  double chi2 = chi2_of(p);
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::ArrayXd z = (x - p[1]) / p[2];
    Eigen::ArrayXd m = p[0] * (-0.5 * z.square()).exp();
    Eigen::ArrayXd r = y - m;
    Eigen::MatrixXd jac(x.size(), 3);
    jac.col(0) = (m / p[0]).matrix();
    jac.col(1) = (m * z / p[2]).matrix();
    jac.col(2) = (m * z.square() / p[2]).matrix();

    Eigen::Matrix3d jtj = jac.transpose() * w.matrix().asDiagonal() * jac;
    Eigen::Vector3d jtr = jac.transpose() * (w * r).matrix();
    Eigen::Vector3d step = jtj.ldlt().solve(jtr);
    if (!step.allFinite()) throw NumericError("kappa fit did not converge");

    double t = 1.0;
    bool improved = false;
    for (int h = 0; h < 12; ++h, t *= 0.5) {
      Eigen::Vector3d q = p + t * step;
      q[2] = std::abs(q[2]);
      if (q[0] <= 0.0 || q[2] <= 0.0) continue;
      double c2 = chi2_of(q);
      if (c2 <= chi2) {
        bool converged = (t * step).cwiseAbs().maxCoeff() <
                         1e-10 * p.cwiseAbs().maxCoeff();
        p = q;
        chi2 = c2;
        improved = true;
        if (converged) return {p[0], p[1], p[2]};
        break;
      }
    }
    if (!improved) return {p[0], p[1], p[2]};  // stalled at the optimum
  }
  throw NumericError("kappa fit did not converge within 200 iterations");
}

}  // namespace

KappaFit kappa_fit(const ComHistogram& hist) {
  Eigen::ArrayXd x(hist.bins);
  for (int i = 0; i < hist.bins; ++i) x[i] = hist.axis_coord(i);

  auto project = [](const ArrayXXi64& h, bool onto_x) {
    return onto_x ? h.cast<double>().colwise().sum().transpose().eval()
                  : h.cast<double>().rowwise().sum().eval();
  };

  KappaFit fit;
  const ArrayXXi64* channels[2] = {&hist.plus, &hist.minus};
  int k = 0;
  for (const ArrayXXi64* ch : channels) {
    for (bool onto_x : {true, false}) {
      Eigen::ArrayXd proj = project(*ch, onto_x);
      fit.estimates[k++] = fit_gaussian_1d(x, proj).sigma;
    }
  }

  double mean = 0.0;
  for (double e : fit.estimates) mean += e;
  mean /= 4.0;
  double ss = 0.0;
  for (double e : fit.estimates) ss += (e - mean) * (e - mean);
  fit.kappa = mean;
  fit.kappa_err = std::sqrt(ss / 3.0);
  return fit;
}

namespace {

struct LhvStrategy {
  double weight = 1.0;
  int d_inf = 1;
  int d_a = 1;
  int d_ap = 1;
  int o_b = 1;
  int o_bp = 1;
};

// Hybrid combination over a mixture: every term shares the unpolarized
// detection rate as denominator; polarized terms carry the fair-sampling
// factor 2 (a polarizer halves the accepted flux). Non-enhancement d <= d_inf
// then bounds |S| by 2 pointwise in lambda.
double eval_lhv(const std::vector<LhvStrategy>& mix) {
  double n_inf = 0, t1 = 0, t2 = 0, t3 = 0, t4 = 0, t_inf = 0;
  for (const auto& s : mix) {
    n_inf += s.weight * s.d_inf;
    t1 += s.weight * s.d_a * s.o_b;
    t2 += s.weight * s.d_a * s.o_bp;
    t3 += s.weight * s.d_ap * s.o_b;
    t4 += s.weight * s.d_ap * s.o_bp;
    t_inf += s.weight * s.d_inf * s.o_b;
  }
  if (n_inf <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (2.0 * (t1 - t2 + t3 + t4) - 2.0 * t_inf) / n_inf;
}

}  // namespace

double lhv_exhaustive_max() {
  double best = 0.0;
  for (int da = 0; da <= 1; ++da)
    for (int dap = 0; dap <= 1; ++dap)
      for (int ob : {-1, 1})
        for (int obp : {-1, 1}) {
          std::vector<LhvStrategy> mix{{1.0, 1, da, dap, ob, obp}};
          best = std::max(best, std::abs(eval_lhv(mix)));
        }
  return best;
}

double lhv_bound_oracle(int n_models, std::uint64_t seed) {
  if (n_models < 1) throw std::invalid_argument("n_models must be >= 1");
  double best = 0.0;
  for (int m = 0; m < n_models; ++m) {
    CounterRng rng(seed, static_cast<std::uint64_t>(m));
    int k = 1 + static_cast<int>(rng.next_u64() % 8);
    std::vector<LhvStrategy> mix(k);
    for (auto& s : mix) {
      s.weight = rng.uniform();
      s.d_inf = rng.bernoulli(0.9) ? 1 : 0;
      s.d_a = s.d_inf && rng.bernoulli(0.5) ? 1 : 0;
      s.d_ap = s.d_inf && rng.bernoulli(0.5) ? 1 : 0;
      s.o_b = rng.bernoulli(0.5) ? 1 : -1;
      s.o_bp = rng.bernoulli(0.5) ? 1 : -1;
    }
    double s_val = eval_lhv(mix);
    if (std::isfinite(s_val)) best = std::max(best, std::abs(s_val));
  }
  return best;
}

double quantum_s_closed_form(double visibility, double c_marginal) {
  return 2.0 * std::sqrt(2.0) * visibility - 2.0 * c_marginal;
}

}  // namespace ghostlab
