#pragma once

#include <cmath>
#include <optional>

#include "ghostlab/kspace.hpp"

namespace ghostlab {

enum class Channel : int { plus = +1, minus = -1 };

// Analyzer setting: signal phase theta_s (or marginal, i.e. signal analyzer
// removed) and idler phase theta_i. Angles are reduced to [0, 2pi).
class Setting {
 public:
  static Setting angles(double theta_s, double theta_i);
  static Setting marginal(double theta_i);

  bool is_marginal() const { return !theta_s_.has_value(); }
  double theta_s() const;  // throws std::logic_error for marginal settings
  double theta_i() const { return theta_i_; }

  bool same_as(const Setting& o, double tol = 1e-12) const;

 private:
  std::optional<double> theta_s_;
  double theta_i_ = 0.0;
};

// Fringe attenuation from averaging a linear signal-arm phase (slope alpha)
// over the anti-correlation width kappa.
template <class Scalar>
Scalar visibility_kappa(Scalar alpha, Scalar kappa) {
  return std::exp(-alpha * alpha * kappa * kappa / Scalar(2));
}

// Fringe attenuation from the residual wavevector mismatch xi_k between the
// two superposed components.
template <class Scalar>
Scalar visibility_xi(Scalar xi_k, Scalar kappa) {
  return std::exp(-xi_k * xi_k / (Scalar(8) * kappa * kappa));
}

// Multiplicative visibility decomposition. Cross terms between the factors
// are neglected by construction.
struct VisibilityBudget {
  double v_ult = 1.0;    // noise-floor limit, (g2-1)/(g2+1)
  double optics = 1.0;   // static optical contrast
  double v_kappa = 1.0;  // phase-slope averaging over kappa
  double v_xi = 1.0;     // component wavevector mismatch

  double total() const { return v_ult * optics * v_kappa * v_xi; }
};

VisibilityBudget visibility_budget(double v_ult, double optics, double alpha,
                                   double kappa, double xi_k);

// Closed form consumed by the Monte Carlo engine: probability that a
// heralded idler at ki exits the requested analyzer port.
//
//   p(+) = (1 + v_tot cos(phi(-ki, ki) + theta_s - theta_i)) / 2
//   p(-) = 1 - p(+)
//
// with v_tot = extra_visibility * exp(-xi_k^2/(8 kappa^2))
//            * exp(-alpha_eff^2 kappa^2 / 2)
// and alpha_eff the signal-profile gradient magnitude at -ki (for linear
// profiles this is the exact result of marginalizing the sampled ks over its
// Gaussian spread; for sampled profiles it is a local approximation).
// The two ports are orthogonal: the "-" port is the "+" port at
// theta_i + pi, so the probabilities always sum to one and C(phi) tracks
// +cos(phi + theta_s - theta_i). Marginal settings return 1/2 exactly.
double conditional_idler_prob(const BellEprState& state, const Setting& setting,
                              KVector ki, double extra_visibility,
                              Channel channel);

// Quadrature reference for the closed form: integral over the bucket disc of
// the conditional ks density times the analyzer projection weight,
//
//   p(+-)(ki) = Int_disc N(ks; -ki, kappa^2 I)
//               * {cos^2, sin^2}((phi(ks, ki) + theta_s - theta_i)/2) d ks,
//
// i.e. the sigma -> 0 conditional density of ks given ki restricted to the
// aperture. p(+) + p(-) equals the polarization-independent containment
// weight of the bucket at this ki and is setting-independent. The marginal
// setting returns half the containment for either channel. Apparatus factors
// (extra visibility, xi_k) are not part of this ideal-projection model.
double outcome_probability(const BellEprState& state, const Setting& setting,
                           KVector ki, Channel channel, double rel_tol = 1e-6);

}  // namespace ghostlab
