#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "ghostlab/kspace.hpp"
#include "ghostlab/montecarlo.hpp"

namespace ghostlab {

// Stack of correlation frames C_j(k) = V cos(phase(k) + theta_j), one global
// analyzer phase theta_j per frame.
struct FringeStack {
  std::vector<Eigen::ArrayXXd> frames;
  std::vector<double> thetas;
  FrameGrid grid;
};

// Builds the correlation stack from classical interference intensity pairs:
// C = (I+ - I-)/(I+ + I-), zero where a pixel registered nothing.
FringeStack correlation_frames(const std::vector<FringeFrame>& fringe_frames,
                               const FrameGrid& grid);

// Rectangular band-pass in discrete frequency space. (cx, cy) is the carrier
// bin in signed FFT coordinates; the mask keeps bins within the half-widths
// (circularly).
struct CarrierWindow {
  int cx = 0;
  int cy = 0;
  int half_x = 1;
  int half_y = 1;
};

struct RetrievalOptions {
  // Explicit carrier window; when absent the carrier is located from the
  // frame-summed spectrum magnitude (peak outside the 2-bin DC guard, at
  // least min_peak_ratio above the median background) and the window half-
  // width defaults to half the carrier distance from DC. The summed spectrum
  // is mirror-symmetric, so the sideband orientation is resolved by trying
  // both peaks and keeping the one whose detuned phasors cohere across the
  // sweep.
  std::optional<CarrierWindow> window;
  // Report the conjugate of the coherence-preferred sideband: the mirrored
  // carrier window with the retrieved phases negated (exactly). Ignored when
  // an explicit window is given.
  bool take_conjugate = false;
  // Shift the masked spectrum so the carrier sits at DC before inverting,
  // returning the residual profile with the carrier plane wave (anchored at
  // k = 0) removed.
  bool demodulate = false;
  double min_peak_ratio = 3.0;
};

// Result of the Fourier-transform retrieval. The profile is sampled at the
// grid bin centres with values wrapped to (-pi, pi]; quality holds the
// per-pixel mean resultant length of the frame phasors (1 = frames agree
// perfectly).
struct RetrievedPhase {
  PhaseProfile profile = PhaseProfile::linear(0.0, 0.0, 0.0);
  Eigen::ArrayXXd quality;
  double mean_quality = 0.0;
  CarrierWindow window;
  bool conjugate = false;
  bool low_quality = false;   // mean_quality < 0.5
  bool narrow_sweep = false;  // theta span < pi
};

// Per frame: 2D FFT, zero everything outside the carrier window, inverse
// FFT, take the argument, remove the frame's global phase theta_j; then
// average the per-frame unit phasors pixel by pixel (circular mean, immune
// to 2pi wraps and exactly independent of frame order).
RetrievedPhase retrieve_phase(const FringeStack& stack,
                              const RetrievalOptions& options = {});

// Difference profile seen by the idler camera: phase_s(-ki) - phase_i(ki).
// Two linear inputs combine exactly into a linear profile (slopes add with
// the signal slope reflected); otherwise the difference is sampled on the
// grid, which both domains must cover.
PhaseProfile combine_profiles(const PhaseProfile& phase_s,
                              const PhaseProfile& phase_i,
                              const FrameGrid& grid = FrameGrid{});

// Dense 2D transforms used by the retrieval (rows then columns).
Eigen::MatrixXcd fft2(const Eigen::ArrayXXd& in);
Eigen::MatrixXcd ifft2(const Eigen::MatrixXcd& in);

}  // namespace ghostlab
