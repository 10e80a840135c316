#include "ghostlab/kspace.hpp"

#include <algorithm>
#include <cmath>

namespace ghostlab {

std::vector<std::string> BiphotonParams::validate() const {
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  if (sigma < 0.0) throw std::invalid_argument("sigma must be non-negative");
  if (!(bucket_radius_k > 0.0))
    throw std::invalid_argument("bucket_radius_k must be positive");
  if (!(fov_half_width > 0.0))
    throw std::invalid_argument("fov_half_width must be positive");
  if (delta_k < 0.0) throw std::invalid_argument("delta_k must be non-negative");
  if (xi_k < 0.0) throw std::invalid_argument("xi_k must be non-negative");

  std::vector<std::string> warnings;
  if (delta_k < 10.0 * kappa) {
    warnings.push_back(
        "delta_k < 10*kappa: the folded-coordinate picture assumes the fold "
        "shift is much larger than the anti-correlation width");
  }
  return warnings;
}

PhaseProfile PhaseProfile::linear(double slope_x, double slope_y,
                                  double offset) {
  PhaseProfile p(Kind::linear);
  p.slope_x_ = slope_x;
  p.slope_y_ = slope_y;
  p.offset_ = offset;
  return p;
}

PhaseProfile PhaseProfile::sampled(Eigen::ArrayXXd values, double x0,
                                   double y0, double dx, double dy) {
  if (values.rows() < 2 || values.cols() < 2) {
    throw std::invalid_argument("sampled phase profile needs at least 2x2 nodes");
  }
  if (!(dx > 0.0) || !(dy > 0.0)) {
    throw std::invalid_argument("sampled phase profile needs positive spacing");
  }
  if (!values.isFinite().all()) {
    throw std::invalid_argument("sampled phase profile contains non-finite values");
  }
  PhaseProfile p(Kind::sampled);
  p.values_ = std::move(values);
  p.x0_ = x0;
  p.y0_ = y0;
  p.dx_ = dx;
  p.dy_ = dy;
  return p;
}

namespace {

// Locate the interpolation cell along one axis: index i and fraction t such
// that x = x0 + (i + t) * dx with 0 <= t <= 1. Queries up to half a cell
// outside the grid clamp onto the boundary; beyond that is a caller error.
std::pair<Eigen::Index, double> locate(double x, double x0, double dx,
                                       Eigen::Index n, const char* axis) {
  const double u = (x - x0) / dx;
  if (u < -0.5 || u > static_cast<double>(n - 1) + 0.5) {
    throw std::out_of_range(std::string("phase profile query outside sampled grid (") +
                            axis + " axis)");
  }
  const double clamped = std::clamp(u, 0.0, static_cast<double>(n - 1));
  Eigen::Index i = static_cast<Eigen::Index>(clamped);
  if (i >= n - 1) i = n - 2;
  return {i, clamped - static_cast<double>(i)};
}

}  // namespace

double PhaseProfile::operator()(KVector k) const {
  if (kind_ == Kind::linear) {
    return slope_x_ * k.kx + slope_y_ * k.ky + offset_;
  }
  const auto [i, tx] = locate(k.kx, x0_, dx_, values_.cols(), "x");
  const auto [j, ty] = locate(k.ky, y0_, dy_, values_.rows(), "y");
  const double v00 = values_(j, i), v01 = values_(j, i + 1);
  const double v10 = values_(j + 1, i), v11 = values_(j + 1, i + 1);
  return (1 - ty) * ((1 - tx) * v00 + tx * v01) +
         ty * ((1 - tx) * v10 + tx * v11);
}

KVector PhaseProfile::gradient(KVector k) const {
  if (kind_ == Kind::linear) {
    return {slope_x_, slope_y_};
  }
  const auto [i, tx] = locate(k.kx, x0_, dx_, values_.cols(), "x");
  const auto [j, ty] = locate(k.ky, y0_, dy_, values_.rows(), "y");
  const double v00 = values_(j, i), v01 = values_(j, i + 1);
  const double v10 = values_(j + 1, i), v11 = values_(j + 1, i + 1);
  // exact gradient of the bilinear interpolant within the cell
  const double gx = ((1 - ty) * (v01 - v00) + ty * (v11 - v10)) / dx_;
  const double gy = ((1 - tx) * (v10 - v00) + tx * (v11 - v01)) / dy_;
  return {gx, gy};
}

PhaseProfile PhaseProfile::scaled(double c) const {
  if (kind_ == Kind::linear) {
    return linear(c * slope_x_, c * slope_y_, c * offset_);
  }
  return sampled(values_ * c, x0_, y0_, dx_, dy_);
}

bool PhaseProfile::contains(KVector k) const {
  if (kind_ == Kind::linear) return true;
  const double ux = (k.kx - x0_) / dx_;
  const double uy = (k.ky - y0_) / dy_;
  return ux >= -0.5 && ux <= static_cast<double>(values_.cols() - 1) + 0.5 &&
         uy >= -0.5 && uy <= static_cast<double>(values_.rows() - 1) + 0.5;
}

double joint_phase(const BellEprState& state, KVector ks, KVector ki) {
  const double f = state.params.fov_half_width;
  for (const KVector k : {ks, ki}) {
    if (std::abs(k.kx) > f || std::abs(k.ky) > f) {
      throw std::out_of_range("joint_phase: wavevector outside field of view");
    }
  }
  return state.phase_s(ks) - state.phase_i(ki);
}

std::pair<KVector, KVector> sample_pair(const BiphotonParams& p,
                                        CounterRng& rng) {
  const double f = p.fov_half_width;
  const KVector ki{rng.uniform(-f, f), rng.uniform(-f, f)};
  const auto [gx, gy] = rng.normal_pair();
  const KVector ks{-ki.kx + p.kappa * gx, -ki.ky + p.kappa * gy};
  return {ks, ki};
}

}  // namespace ghostlab
