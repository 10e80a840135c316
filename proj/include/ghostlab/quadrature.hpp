#pragma once

#include <cmath>
#include <cstdint>
#include <queue>
#include <vector>

#include "ghostlab/errors.hpp"

namespace ghostlab {

struct QuadResult {
  double value = 0.0;
  double error_estimate = 0.0;
  long evaluations = 0;
};

namespace quad_detail {

// 7-point Gauss-Legendre nodes/weights on [-1, 1].
inline constexpr double kNodes[7] = {
    -0.9491079123427585, -0.7415311855993945, -0.4058451513773972,
    0.0,
    0.4058451513773972,  0.7415311855993945,  0.9491079123427585};
inline constexpr double kWeights[7] = {
    0.1294849661688697, 0.2797053914892766, 0.3818300505051189,
    0.4179591836734694,
    0.3818300505051189, 0.2797053914892766, 0.1294849661688697};

template <class F>
double panel(F& f, double x0, double x1, double y0, double y1, long& evals) {
  const double hx = 0.5 * (x1 - x0), cx = 0.5 * (x1 + x0);
  const double hy = 0.5 * (y1 - y0), cy = 0.5 * (y1 + y0);
  double sum = 0.0;
  for (int i = 0; i < 7; ++i) {
    const double x = cx + hx * kNodes[i];
    double row = 0.0;
    for (int j = 0; j < 7; ++j) {
      row += kWeights[j] * f(x, cy + hy * kNodes[j]);
    }
    sum += kWeights[i] * row;
  }
  evals += 49;
  return sum * hx * hy;
}

struct Cell {
  double x0, x1, y0, y1;
  double coarse;   // one-panel estimate
  double refined;  // 2x2 subdivision estimate
  double err;      // |refined - coarse|
};

template <class F>
Cell make_cell(F& f, double x0, double x1, double y0, double y1, long& evals) {
  Cell c{x0, x1, y0, y1, 0, 0, 0};
  c.coarse = panel(f, x0, x1, y0, y1, evals);
  const double xm = 0.5 * (x0 + x1), ym = 0.5 * (y0 + y1);
  c.refined = panel(f, x0, xm, y0, ym, evals) + panel(f, xm, x1, y0, ym, evals) +
              panel(f, x0, xm, ym, y1, evals) + panel(f, xm, x1, ym, y1, evals);
  c.err = std::abs(c.refined - c.coarse);
  return c;
}

struct ByError {
  bool operator()(const Cell& a, const Cell& b) const { return a.err < b.err; }
};

}  // namespace quad_detail

// Adaptive tensor-product Gauss-Legendre quadrature over a rectangle.
// Refinement always splits the worst cell in both directions; termination is
// on the total refinement discrepancy relative to the integral (with an
// absolute floor so exact zeros terminate). Throws NumericError when the
// evaluation budget is exhausted before the tolerance is met.
template <class F>
QuadResult integrate_rect(F&& f, double x0, double x1, double y0, double y1,
                          double rel_tol = 1e-6, double abs_floor = 1e-14,
                          int initial_x = 4, int initial_y = 4,
                          long max_evals = 8000000) {
  using quad_detail::Cell;
  long evals = 0;
  std::priority_queue<Cell, std::vector<Cell>, quad_detail::ByError> cells;
  double total = 0.0, total_err = 0.0;
  for (int i = 0; i < initial_x; ++i) {
    for (int j = 0; j < initial_y; ++j) {
      const double ax = x0 + (x1 - x0) * i / initial_x;
      const double bx = x0 + (x1 - x0) * (i + 1) / initial_x;
      const double ay = y0 + (y1 - y0) * j / initial_y;
      const double by = y0 + (y1 - y0) * (j + 1) / initial_y;
      Cell c = quad_detail::make_cell(f, ax, bx, ay, by, evals);
      total += c.refined;
      total_err += c.err;
      cells.push(c);
    }
  }
  while (total_err > abs_floor && total_err > rel_tol * std::abs(total)) {
    if (evals >= max_evals) {
      throw NumericError("adaptive quadrature exhausted its evaluation budget "
                         "before reaching the requested tolerance");
    }
    Cell worst = cells.top();
    cells.pop();
    total -= worst.refined;
    total_err -= worst.err;
    const double xm = 0.5 * (worst.x0 + worst.x1);
    const double ym = 0.5 * (worst.y0 + worst.y1);
    const double xs[3] = {worst.x0, xm, worst.x1};
    const double ys[3] = {worst.y0, ym, worst.y1};
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        Cell c = quad_detail::make_cell(f, xs[i], xs[i + 1], ys[j], ys[j + 1],
                                        evals);
        total += c.refined;
        total_err += c.err;
        cells.push(c);
      }
    }
  }
  return {total, total_err, evals};
}

// Integral of f(kx, ky) over the disc |k| <= radius, done in polar
// coordinates so the integrand stays smooth at the rim.
template <class F>
QuadResult integrate_disc(F&& f, double radius, double rel_tol = 1e-6,
                          double abs_floor = 1e-14) {
  auto polar = [&f](double r, double a) {
    return f(r * std::cos(a), r * std::sin(a)) * r;
  };
  return integrate_rect(polar, 0.0, radius, 0.0, 2.0 * M_PI, rel_tol,
                        abs_floor, 4, 8);
}

}  // namespace ghostlab
