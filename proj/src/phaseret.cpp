#include "ghostlab/phaseret.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include "ghostlab/errors.hpp"

namespace ghostlab {

namespace {

constexpr double kPi = 3.14159265358979323846;

int signed_freq(int bin, int n) { return bin <= n / 2 ? bin : bin - n; }

int circ_dist(int bin, int centre, int n) {
  int d = ((bin - centre) % n + n) % n;
  return d > n / 2 ? d - n : d;
}

}  // namespace

Eigen::MatrixXcd fft2(const Eigen::ArrayXXd& in) {
  Eigen::FFT<double> fft;
  const Eigen::Index ny = in.rows(), nx = in.cols();
  Eigen::MatrixXcd out(ny, nx);
  Eigen::VectorXcd src(nx), dst(nx);
  for (Eigen::Index r = 0; r < ny; ++r) {
    src = in.row(r).cast<std::complex<double>>().matrix().transpose();
    fft.fwd(dst, src);
    out.row(r) = dst.transpose();
  }
  Eigen::VectorXcd col(ny), colF(ny);
  for (Eigen::Index c = 0; c < nx; ++c) {
    col = out.col(c);
    fft.fwd(colF, col);
    out.col(c) = colF;
  }
  return out;
}

Eigen::MatrixXcd ifft2(const Eigen::MatrixXcd& in) {
  Eigen::FFT<double> fft;
  const Eigen::Index ny = in.rows(), nx = in.cols();
  Eigen::MatrixXcd out(ny, nx);
  Eigen::VectorXcd src(nx), dst(nx);
  for (Eigen::Index r = 0; r < ny; ++r) {
    src = in.row(r).transpose();
    fft.inv(dst, src);
    out.row(r) = dst.transpose();
  }
  Eigen::VectorXcd col(ny), colF(ny);
  for (Eigen::Index c = 0; c < nx; ++c) {
    col = out.col(c);
    fft.inv(colF, col);
    out.col(c) = colF;
  }
  return out;
}

FringeStack correlation_frames(const std::vector<FringeFrame>& fringe_frames,
                               const FrameGrid& grid) {
  FringeStack stack;
  stack.grid = grid;
  stack.frames.reserve(fringe_frames.size());
  stack.thetas.reserve(fringe_frames.size());
  for (const auto& fr : fringe_frames) {
    Eigen::ArrayXXd tot = fr.intensity_plus + fr.intensity_minus;
    Eigen::ArrayXXd c = (fr.intensity_plus - fr.intensity_minus) / tot.max(1.0);
    stack.frames.push_back((tot > 0.0).select(c, 0.0));
    stack.thetas.push_back(fr.theta);
  }
  return stack;
}

namespace {

CarrierWindow locate_carrier(const std::vector<Eigen::MatrixXcd>& specs,
                             double min_peak_ratio) {
  const Eigen::Index ny = specs.front().rows(), nx = specs.front().cols();
  Eigen::ArrayXXd power = Eigen::ArrayXXd::Zero(ny, nx);
  for (const auto& s : specs) power += s.cwiseAbs().array();

  // Peak search outside the 2-bin DC guard.
  double peak = -1.0;
  int px = 0, py = 0;
  std::vector<double> background;
  background.reserve(static_cast<std::size_t>(nx * ny));
  for (Eigen::Index iy = 0; iy < ny; ++iy) {
    for (Eigen::Index ix = 0; ix < nx; ++ix) {
      int sx = signed_freq(static_cast<int>(ix), static_cast<int>(nx));
      int sy = signed_freq(static_cast<int>(iy), static_cast<int>(ny));
      if (std::max(std::abs(sx), std::abs(sy)) < 2) continue;
      background.push_back(power(iy, ix));
      if (power(iy, ix) > peak) {
        peak = power(iy, ix);
        px = sx;
        py = sy;
      }
    }
  }
  std::nth_element(background.begin(),
                   background.begin() + background.size() / 2,
                   background.end());
  double median = background[background.size() / 2];
  if (!(peak > min_peak_ratio * std::max(median, 1e-300)))
    throw InsufficientDataError(
        "retrieve_phase: no carrier peak above " +
        std::to_string(min_peak_ratio) + "x the spectral background");

  // The frame-summed magnitude cannot tell the two symmetric peaks apart;
  // report the positive-frequency one (dominant-slope axis) as the candidate
  // and let the caller pick the orientation from the sweep.
  if (std::abs(py) >= std::abs(px) ? py < 0 : px < 0) {
    px = -px;
    py = -py;
  }
  int half = std::max(1, std::max(std::abs(px), std::abs(py)) / 2);
  return CarrierWindow{px, py, half, half};
}

struct Extraction {
  Eigen::ArrayXXd values;
  Eigen::ArrayXXd quality;
  double mean_quality = 0.0;
};

}  // namespace

RetrievedPhase retrieve_phase(const FringeStack& stack,
                              const RetrievalOptions& options) {
  if (stack.frames.empty())
    throw std::invalid_argument("retrieve_phase: empty fringe stack");
  if (stack.frames.size() != stack.thetas.size())
    throw std::invalid_argument(
        "retrieve_phase: frame/theta count mismatch");
  const Eigen::Index ny = stack.frames.front().rows();
  const Eigen::Index nx = stack.frames.front().cols();
  if (ny != stack.grid.ny || nx != stack.grid.nx)
    throw std::invalid_argument("retrieve_phase: frames do not match grid");
  for (const auto& f : stack.frames)
    if (f.rows() != ny || f.cols() != nx)
      throw std::invalid_argument("retrieve_phase: frame dimensions differ");

  RetrievedPhase out;
  double th_lo = *std::min_element(stack.thetas.begin(), stack.thetas.end());
  double th_hi = *std::max_element(stack.thetas.begin(), stack.thetas.end());
  out.narrow_sweep = th_hi - th_lo < kPi;

  const std::size_t n_frames = stack.frames.size();
  std::vector<Eigen::MatrixXcd> specs;
  specs.reserve(n_frames);
  for (const auto& f : stack.frames) specs.push_back(fft2(f));

  // Mask one sideband, optionally shift it to DC, invert, strip the sweep
  // phase, then average the per-frame unit phasors pixel by pixel. Addends
  // are summed in a canonical (sorted) order so the result is bit-identical
  // under frame permutations.
  auto extract = [&](const CarrierWindow& w) {
    // The spectral shift removes the carrier ramp as seen from array index
    // (0, 0); re-anchor it to the grid's physical origin so a pure carrier
    // demodulates to exactly zero.
    std::complex<double> anchor(1.0, 0.0);
    if (options.demodulate) {
      KVector o = stack.grid.center_of(0, 0);
      double kx_c = 2.0 * kPi * w.cx / (nx * stack.grid.cell_dx());
      double ky_c = 2.0 * kPi * w.cy / (ny * stack.grid.cell_dy());
      anchor = std::polar(1.0, -(kx_c * o.kx + ky_c * o.ky));
    }
    std::vector<Eigen::MatrixXcd> phasors;
    phasors.reserve(n_frames);
    for (std::size_t j = 0; j < n_frames; ++j) {
      Eigen::MatrixXcd masked = Eigen::MatrixXcd::Zero(ny, nx);
      for (Eigen::Index iy = 0; iy < ny; ++iy) {
        int dy = circ_dist(static_cast<int>(iy), w.cy, static_cast<int>(ny));
        if (std::abs(dy) > w.half_y) continue;
        for (Eigen::Index ix = 0; ix < nx; ++ix) {
          int dx = circ_dist(static_cast<int>(ix), w.cx, static_cast<int>(nx));
          if (std::abs(dx) > w.half_x) continue;
          masked(iy, ix) = specs[j](iy, ix);
        }
      }
      if (options.demodulate) {
        Eigen::MatrixXcd shifted(ny, nx);
        for (Eigen::Index iy = 0; iy < ny; ++iy) {
          Eigen::Index sy = ((iy + w.cy) % ny + ny) % ny;
          for (Eigen::Index ix = 0; ix < nx; ++ix) {
            Eigen::Index sx = ((ix + w.cx) % nx + nx) % nx;
            shifted(iy, ix) = masked(sy, sx);
          }
        }
        masked.swap(shifted);
      }
      Eigen::MatrixXcd z = ifft2(masked);
      std::complex<double> detune = std::polar(1.0, -stack.thetas[j]) * anchor;
      for (Eigen::Index iy = 0; iy < ny; ++iy)
        for (Eigen::Index ix = 0; ix < nx; ++ix) {
          std::complex<double> v = z(iy, ix);
          double mag = std::abs(v);
          z(iy, ix) =
              mag > 0.0 ? (v / mag) * detune : std::complex<double>(0.0);
        }
      phasors.push_back(std::move(z));
    }

    Extraction ex;
    ex.values.resize(ny, nx);
    ex.quality = Eigen::ArrayXXd::Zero(ny, nx);
    std::vector<std::complex<double>> addends(n_frames);
    for (Eigen::Index iy = 0; iy < ny; ++iy) {
      for (Eigen::Index ix = 0; ix < nx; ++ix) {
        for (std::size_t j = 0; j < n_frames; ++j)
          addends[j] = phasors[j](iy, ix);
        std::sort(addends.begin(), addends.end(),
                  [](const std::complex<double>& a,
                     const std::complex<double>& b) {
                    return a.real() != b.real() ? a.real() < b.real()
                                                : a.imag() < b.imag();
                  });
        std::complex<double> sum = 0.0;
        for (const auto& u : addends) sum += u;
        std::complex<double> mean = sum / static_cast<double>(n_frames);
        ex.values(iy, ix) = std::abs(mean) > 0.0 ? std::arg(mean) : 0.0;
        ex.quality(iy, ix) = std::abs(mean);
      }
    }
    ex.mean_quality = ex.quality.mean();
    return ex;
  };

  Extraction ex;
  if (options.window) {
    const CarrierWindow& w = *options.window;
    if (w.half_x < 1 || w.half_y < 1 || 2 * w.half_x + 1 > nx ||
        2 * w.half_y + 1 > ny)
      throw std::invalid_argument("retrieve_phase: bad carrier window size");
    if (std::max(std::abs(w.cx), std::abs(w.cy)) < 2)
      throw std::invalid_argument(
          "retrieve_phase: carrier window must sit at least 2 bins from DC");
    out.window = w;
    out.conjugate = false;
    ex = extract(w);
  } else {
    // The summed spectrum cannot orient the carrier, but the sweep can: on
    // the true sideband the detuned phasors line up, on its mirror they pick
    // up -2 theta_j and cancel. Keep whichever coheres better.
    CarrierWindow cand = locate_carrier(specs, options.min_peak_ratio);
    CarrierWindow mirror{-cand.cx, -cand.cy, cand.half_x, cand.half_y};
    Extraction a = extract(cand);
    Extraction b = extract(mirror);
    bool use_mirror = b.mean_quality > a.mean_quality;
    out.window = use_mirror ? mirror : cand;
    ex = use_mirror ? std::move(b) : std::move(a);
    if (options.take_conjugate) {
      // Conjugate sideband under the conjugate demodulation convention: the
      // profile negates exactly, the coherence is untouched.
      ex.values = -ex.values;
      out.window =
          CarrierWindow{-out.window.cx, -out.window.cy, out.window.half_x,
                        out.window.half_y};
    }
    out.conjugate = options.take_conjugate;
  }

  out.quality = std::move(ex.quality);
  out.mean_quality = ex.mean_quality;
  out.low_quality = out.mean_quality < 0.5;

  KVector origin = stack.grid.center_of(0, 0);
  out.profile = PhaseProfile::sampled(ex.values, origin.kx, origin.ky,
                                      stack.grid.cell_dx(),
                                      stack.grid.cell_dy());
  return out;
}

PhaseProfile combine_profiles(const PhaseProfile& phase_s,
                              const PhaseProfile& phase_i,
                              const FrameGrid& grid) {
  if (phase_s.kind() == PhaseProfile::Kind::linear &&
      phase_i.kind() == PhaseProfile::Kind::linear) {
    return PhaseProfile::linear(-phase_s.slope_x() - phase_i.slope_x(),
                                -phase_s.slope_y() - phase_i.slope_y(),
                                phase_s.offset() - phase_i.offset());
  }

  Eigen::ArrayXXd values(grid.ny, grid.nx);
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      KVector ki = grid.center_of(ix, iy);
      KVector ks{-ki.kx, -ki.ky};
      if (!phase_s.contains(ks) || !phase_i.contains(ki))
        throw std::out_of_range(
            "combine_profiles: profiles do not cover the grid after the "
            "ks = -ki reflection (failing point kx=" +
            std::to_string(ki.kx) + ", ky=" + std::to_string(ki.ky) + ")");
      values(iy, ix) = phase_s(ks) - phase_i(ki);
    }
  }
  KVector origin = grid.center_of(0, 0);
  return PhaseProfile::sampled(values, origin.kx, origin.ky, grid.cell_dx(),
                               grid.cell_dy());
}

}  // namespace ghostlab
