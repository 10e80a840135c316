#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ghostlab/rng.hpp"

namespace ghostlab {

// Transverse wavevector in the far-field plane, units mm^-1.
template <class Scalar>
struct KVec {
  Scalar kx{};
  Scalar ky{};

  Scalar squared_norm() const { return kx * kx + ky * ky; }
  Scalar norm() const { return std::sqrt(squared_norm()); }
};

template <class Scalar>
KVec<Scalar> operator+(KVec<Scalar> a, KVec<Scalar> b) {
  return {a.kx + b.kx, a.ky + b.ky};
}
template <class Scalar>
KVec<Scalar> operator-(KVec<Scalar> a, KVec<Scalar> b) {
  return {a.kx - b.kx, a.ky - b.ky};
}
template <class Scalar>
KVec<Scalar> operator-(KVec<Scalar> a) {
  return {-a.kx, -a.ky};
}
template <class Scalar>
KVec<Scalar> operator*(Scalar c, KVec<Scalar> a) {
  return {c * a.kx, c * a.ky};
}

using KVector = KVec<double>;

// Source and geometry parameters of the wavevector-entangled pair source.
//
// kappa           width of the anti-correlation: ks + ki ~ Gaussian(0, kappa^2)
//                 per axis.
// sigma           reciprocal source-size parameter multiplying (ks - ki) in the
//                 amplitude. The simulated regime is the sigma -> 0 limit where
//                 the idler marginal is flat over the field of view; amplitude
//                 evaluation itself needs sigma > 0.
// delta_k         interferometer fold shift. The simulation works in post-fold
//                 coordinates, so delta_k only matters for validation (the fold
//                 approximation needs delta_k >> kappa) and for the mismatch
//                 parameter below.
// xi_k            residual wavevector mismatch between the two superposed
//                 components after the fold; enters as a visibility factor
//                 exp(-xi_k^2 / (8 kappa^2)).
// bucket_radius_k radius of the bucket-detector acceptance disc.
// fov_half_width  half-width of the square camera field of view.
struct BiphotonParams {
  double kappa = 5.9;
  double sigma = 0.0;
  double delta_k = 286.0;
  double xi_k = 0.0;
  double bucket_radius_k = 25.0;
  double fov_half_width = 25.0;

  // Throws std::invalid_argument on nonsense; returns soft warnings.
  std::vector<std::string> validate() const;
};

// Analyzer phase profile over the wavevector plane: either an exact linear
// ramp or a bilinearly interpolated sampled grid (node values in radians).
class PhaseProfile {
 public:
  enum class Kind { linear, sampled };

  PhaseProfile() : PhaseProfile(linear(0.0, 0.0, 0.0)) {}

  static PhaseProfile linear(double slope_x, double slope_y, double offset);
  // values(row j, col i) is the node at (x0 + i*dx, y0 + j*dy).
  static PhaseProfile sampled(Eigen::ArrayXXd values, double x0, double y0,
                              double dx, double dy);

  Kind kind() const { return kind_; }

  // Phase in radians. Sampled profiles throw std::out_of_range beyond the
  // grid (with a half-cell tolerance for edge round-off).
  double operator()(KVector k) const;

  // Gradient of the profile (of the interpolant, for sampled grids).
  KVector gradient(KVector k) const;

  // Profile multiplied by a constant; handy for linearity checks.
  PhaseProfile scaled(double c) const;

  bool contains(KVector k) const;

  // Accessors used by serialization.
  double slope_x() const { return slope_x_; }
  double slope_y() const { return slope_y_; }
  double offset() const { return offset_; }
  const Eigen::ArrayXXd& values() const { return values_; }
  double x0() const { return x0_; }
  double y0() const { return y0_; }
  double dx() const { return dx_; }
  double dy() const { return dy_; }

 private:
  PhaseProfile(Kind kind) : kind_(kind) {}

  Kind kind_;
  double slope_x_ = 0.0, slope_y_ = 0.0, offset_ = 0.0;
  Eigen::ArrayXXd values_;
  double x0_ = 0.0, y0_ = 0.0, dx_ = 1.0, dy_ = 1.0;
};

// Wavevector-indexed two-photon state: pair source plus the two analyzer
// phase profiles imprinted on the signal and idler arms.
struct BellEprState {
  BiphotonParams params;
  PhaseProfile phase_s;
  PhaseProfile phase_i;
};

// Two-photon amplitude (sigma/(pi kappa)) exp(-|ks+ki|^2/(4 kappa^2)
// - sigma^2 |ks-ki|^2 / 4). Normalized to unit L2 norm over both transverse
// planes. Requires sigma > 0; the Monte Carlo sampling path is the sigma -> 0
// limit and never evaluates this.
template <class Scalar>
Scalar biphoton_amplitude(const BiphotonParams& p, KVec<Scalar> ks,
                          KVec<Scalar> ki) {
  if (!(p.kappa > 0.0) || !(p.sigma > 0.0)) {
    throw std::invalid_argument(
        "biphoton_amplitude requires kappa > 0 and sigma > 0");
  }
  const Scalar kappa = static_cast<Scalar>(p.kappa);
  const Scalar sigma = static_cast<Scalar>(p.sigma);
  const KVec<Scalar> sum = ks + ki;
  const KVec<Scalar> diff = ks - ki;
  const Scalar expo = -sum.squared_norm() / (Scalar(4) * kappa * kappa) -
                      sigma * sigma * diff.squared_norm() / Scalar(4);
  return sigma / (Scalar(M_PI) * kappa) * std::exp(expo);
}

// Joint analyzer phase phi(ks, ki) = phi_s(ks) - phi_i(ki). Both points must
// lie inside the square field of view. The raw value is not wrapped.
double joint_phase(const BellEprState& state, KVector ks, KVector ki);

// Draw one pair in the sigma -> 0 regime: ki uniform over the square FOV,
// ks = -ki + delta with delta ~ Gaussian(0, kappa^2) per axis. Consumes a
// fixed number of draws from the stream.
std::pair<KVector, KVector> sample_pair(const BiphotonParams& p,
                                        CounterRng& rng);

}  // namespace ghostlab
