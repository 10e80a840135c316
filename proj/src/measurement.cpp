#include "ghostlab/measurement.hpp"

#include <cmath>
#include <stdexcept>

#include "ghostlab/quadrature.hpp"

namespace ghostlab {

namespace {

double wrap_two_pi(double a) {
  const double two_pi = 2.0 * M_PI;
  double r = std::fmod(a, two_pi);
  if (r < 0.0) r += two_pi;
  return r;
}

}  // namespace

Setting Setting::angles(double theta_s, double theta_i) {
  if (!std::isfinite(theta_s) || !std::isfinite(theta_i)) {
    throw std::invalid_argument("setting angles must be finite");
  }
  Setting s;
  s.theta_s_ = wrap_two_pi(theta_s);
  s.theta_i_ = wrap_two_pi(theta_i);
  return s;
}

Setting Setting::marginal(double theta_i) {
  if (!std::isfinite(theta_i)) {
    throw std::invalid_argument("setting angles must be finite");
  }
  Setting s;
  s.theta_i_ = wrap_two_pi(theta_i);
  return s;
}

double Setting::theta_s() const {
  if (!theta_s_) {
    throw std::logic_error("theta_s undefined for a marginal setting");
  }
  return *theta_s_;
}

bool Setting::same_as(const Setting& o, double tol) const {
  if (is_marginal() != o.is_marginal()) return false;
  if (std::abs(theta_i_ - o.theta_i_) > tol) return false;
  return is_marginal() || std::abs(*theta_s_ - *o.theta_s_) <= tol;
}

VisibilityBudget visibility_budget(double v_ult, double optics, double alpha,
                                   double kappa, double xi_k) {
  if (v_ult < 0.0 || v_ult > 1.0 || optics < 0.0 || optics > 1.0) {
    throw std::invalid_argument("budget factors must lie in [0, 1]");
  }
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  VisibilityBudget b;
  b.v_ult = v_ult;
  b.optics = optics;
  b.v_kappa = visibility_kappa(std::abs(alpha), kappa);
  b.v_xi = visibility_xi(xi_k, kappa);
  return b;
}

double conditional_idler_prob(const BellEprState& state, const Setting& setting,
                              KVector ki, double extra_visibility,
                              Channel channel) {
  if (extra_visibility < 0.0 || extra_visibility > 1.0) {
    throw std::invalid_argument("extra_visibility must lie in [0, 1]");
  }
  if (setting.is_marginal()) return 0.5;

  const BiphotonParams& p = state.params;
  const KVector ks_center = -ki;
  const double alpha_eff = state.phase_s.gradient(ks_center).norm();
  const double v_tot = extra_visibility * visibility_xi(p.xi_k, p.kappa) *
                       visibility_kappa(alpha_eff, p.kappa);
  const double phi = state.phase_s(ks_center) - state.phase_i(ki);
  const double plus =
      0.5 * (1.0 + v_tot * std::cos(phi + setting.theta_s() - setting.theta_i()));
  return channel == Channel::plus ? plus : 1.0 - plus;
}

double outcome_probability(const BellEprState& state, const Setting& setting,
                           KVector ki, Channel channel, double rel_tol) {
  const BiphotonParams& p = state.params;
  const double inv_two_kappa_sq = 1.0 / (2.0 * p.kappa * p.kappa);
  const double density_norm = inv_two_kappa_sq / M_PI;  // 1/(2 pi kappa^2)

  auto gaussian = [&](double kx, double ky) {
    const double ux = kx + ki.kx;
    const double uy = ky + ki.ky;
    return density_norm * std::exp(-(ux * ux + uy * uy) * inv_two_kappa_sq);
  };

  QuadResult q;
  if (setting.is_marginal()) {
    q = integrate_disc([&](double kx, double ky) { return 0.5 * gaussian(kx, ky); },
                       p.bucket_radius_k, rel_tol);
  } else {
    const double shift = setting.theta_s() - setting.theta_i();
    const double sign = channel == Channel::plus ? 1.0 : -1.0;
    q = integrate_disc(
        [&](double kx, double ky) {
          const double phi = state.phase_s(KVector{kx, ky}) - state.phase_i(ki);
          // cos^2((phi+shift)/2) and sin^2 written through the full-angle
          // cosine so both channels share one evaluation path
          return gaussian(kx, ky) * 0.5 * (1.0 + sign * std::cos(phi + shift));
        },
        p.bucket_radius_k, rel_tol);
  }
  // clamp quadrature round-off at the boundaries of [0, 1]
  return std::min(1.0, std::max(0.0, q.value));
}

}  // namespace ghostlab
