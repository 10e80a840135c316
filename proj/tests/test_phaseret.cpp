#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "ghostlab/errors.hpp"
#include "ghostlab/kspace.hpp"
#include "ghostlab/montecarlo.hpp"
#include "ghostlab/phaseret.hpp"

using namespace ghostlab;

namespace {

constexpr double kTau = 2.0 * M_PI;

// Noiseless fringe stack C_j(k) = v cos(profile(k) + theta_j).
FringeStack synthetic_stack(const FrameGrid& grid, const PhaseProfile& profile,
                            double v, int n_frames) {
  FringeStack stack;
  stack.grid = grid;
  for (int j = 0; j < n_frames; ++j) {
    double theta = kTau * j / n_frames;
    Eigen::ArrayXXd frame(grid.ny, grid.nx);
    for (int iy = 0; iy < grid.ny; ++iy)
      for (int ix = 0; ix < grid.nx; ++ix)
        frame(iy, ix) = v * std::cos(profile(grid.center_of(ix, iy)) + theta);
    stack.frames.push_back(std::move(frame));
    stack.thetas.push_back(theta);
  }
  return stack;
}

double rms_against(const RetrievedPhase& r, const FrameGrid& grid,
                   const PhaseProfile& truth) {
  const Eigen::ArrayXXd& vals = r.profile.values();
  double ss = 0.0;
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix) {
      double err = std::remainder(vals(iy, ix) - truth(grid.center_of(ix, iy)),
                                  kTau);
      ss += err * err;
    }
  return std::sqrt(ss / (grid.nx * grid.ny));
}

}  // namespace

TEST_CASE("noiseless stack retrieves the profile to machine noise") {
  FrameGrid grid{64, 64, 25.0};
  // three full fringes across the field of view, negative slope
  PhaseProfile truth = PhaseProfile::linear(0.0, -6.0 * M_PI / 50.0, 0.0);
  FringeStack stack = synthetic_stack(grid, truth, 0.8, 12);
  RetrievedPhase r = retrieve_phase(stack);

  CHECK(rms_against(r, grid, truth) < 1e-10);
  CHECK(r.mean_quality > 1.0 - 1e-12);
  CHECK_FALSE(r.low_quality);
  CHECK_FALSE(r.narrow_sweep);
  CHECK(r.window.cx == 0);
  CHECK(r.window.cy == -3);  // sweep coherence picks the true sideband
}

TEST_CASE("poisson-noise round trip stays within 0.05 rad") {
  BiphotonParams p;
  p.kappa = 5.9;
  p.fov_half_width = 25.0;
  BellEprState state{p, PhaseProfile::linear(0.0, 6.0 * M_PI / 50.0, 0.0),
                     PhaseProfile::linear(0.0, 0.0, 0.0)};
  std::vector<Setting> sweep;
  for (int j = 0; j < 12; ++j)
    sweep.push_back(Setting::angles(0.0, kTau * j / 12.0));
  FrameGrid grid{64, 64, 25.0};
  auto frames = run_classical_fringes(state, sweep, 200.0, 0.8, 321, grid);
  FringeStack stack = correlation_frames(frames, grid);
  REQUIRE(stack.frames.size() == 12);

  RetrievedPhase r = retrieve_phase(stack);
  PhaseProfile truth = combine_profiles(state.phase_s, state.phase_i, grid);
  CHECK(rms_against(r, grid, truth) < 0.05);
  CHECK(r.mean_quality > 0.9);
  CHECK_FALSE(r.low_quality);
}

TEST_CASE("pure carrier demodulates to zero") {
  FrameGrid grid{64, 64, 25.0};
  PhaseProfile carrier = PhaseProfile::linear(0.0, 6.0 * M_PI / 50.0, 0.0);
  FringeStack stack = synthetic_stack(grid, carrier, 0.8, 8);
  RetrievalOptions opt;
  opt.demodulate = true;
  RetrievedPhase r = retrieve_phase(stack, opt);
  CHECK(rms_against(r, grid, PhaseProfile::linear(0.0, 0.0, 0.0)) < 1e-2);
}

TEST_CASE("conjugate peak negates the profile exactly") {
  FrameGrid grid{32, 32, 25.0};
  PhaseProfile truth = PhaseProfile::linear(0.0, 4.0 * M_PI / 50.0, 0.1);
  FringeStack stack = synthetic_stack(grid, truth, 0.7, 10);

  RetrievedPhase plain = retrieve_phase(stack);
  RetrievalOptions opt;
  opt.take_conjugate = true;
  RetrievedPhase conj = retrieve_phase(stack, opt);

  CHECK(conj.conjugate);
  CHECK_FALSE(plain.conjugate);
  CHECK(conj.window.cx == -plain.window.cx);
  CHECK(conj.window.cy == -plain.window.cy);
  CHECK((conj.profile.values() == -plain.profile.values()).all());
  CHECK(conj.mean_quality == plain.mean_quality);
}

TEST_CASE("retrieval is exactly frame-order independent") {
  FrameGrid grid{32, 32, 25.0};
  PhaseProfile truth = PhaseProfile::linear(4.0 * M_PI / 50.0, 0.0, 0.0);
  FringeStack stack = synthetic_stack(grid, truth, 0.6, 9);

  FringeStack shuffled = stack;
  std::vector<size_t> order{4, 7, 0, 8, 2, 6, 1, 5, 3};
  for (size_t i = 0; i < order.size(); ++i) {
    shuffled.frames[i] = stack.frames[order[i]];
    shuffled.thetas[i] = stack.thetas[order[i]];
  }
  RetrievedPhase a = retrieve_phase(stack);
  RetrievedPhase b = retrieve_phase(shuffled);
  CHECK((a.profile.values() == b.profile.values()).all());
  CHECK((a.quality == b.quality).all());
}

TEST_CASE("explicit carrier window is honored and validated") {
  FrameGrid grid{64, 64, 25.0};
  PhaseProfile truth = PhaseProfile::linear(0.0, -6.0 * M_PI / 50.0, 0.0);
  FringeStack stack = synthetic_stack(grid, truth, 0.8, 12);

  RetrievalOptions opt;
  opt.window = CarrierWindow{0, -3, 1, 1};
  RetrievedPhase r = retrieve_phase(stack, opt);
  CHECK(rms_against(r, grid, truth) < 1e-10);
  CHECK_FALSE(r.conjugate);

  opt.window = CarrierWindow{0, 1, 1, 1};  // inside the DC guard
  CHECK_THROWS_AS(retrieve_phase(stack, opt), std::invalid_argument);
  opt.window = CarrierWindow{0, -3, 0, 1};  // degenerate mask
  CHECK_THROWS_AS(retrieve_phase(stack, opt), std::invalid_argument);
  opt.window = CarrierWindow{0, -3, 40, 1};  // wider than the grid
  CHECK_THROWS_AS(retrieve_phase(stack, opt), std::invalid_argument);
}

TEST_CASE("featureless frames have no carrier") {
  FrameGrid grid{32, 32, 25.0};
  FringeStack stack;
  stack.grid = grid;
  for (int j = 0; j < 4; ++j) {
    stack.frames.push_back(Eigen::ArrayXXd::Constant(32, 32, 0.4));
    stack.thetas.push_back(kTau * j / 4.0);
  }
  CHECK_THROWS_AS(retrieve_phase(stack), InsufficientDataError);
}

TEST_CASE("narrow sweeps are flagged") {
  FrameGrid grid{32, 32, 25.0};
  PhaseProfile truth = PhaseProfile::linear(0.0, 4.0 * M_PI / 50.0, 0.0);
  FringeStack stack = synthetic_stack(grid, truth, 0.8, 12);
  stack.frames.resize(3);
  stack.thetas = {0.0, 0.3, 0.6};
  RetrievedPhase r = retrieve_phase(stack);
  CHECK(r.narrow_sweep);
}

TEST_CASE("stack validation") {
  FringeStack empty;
  empty.grid = FrameGrid{8, 8, 1.0};
  CHECK_THROWS_AS(retrieve_phase(empty), std::invalid_argument);

  FringeStack bad;
  bad.grid = FrameGrid{8, 8, 1.0};
  bad.frames.push_back(Eigen::ArrayXXd::Zero(8, 8));
  bad.frames.push_back(Eigen::ArrayXXd::Zero(8, 8));
  bad.thetas = {0.0};  // count mismatch
  CHECK_THROWS_AS(retrieve_phase(bad), std::invalid_argument);

  bad.thetas = {0.0, 1.0};
  bad.frames[1] = Eigen::ArrayXXd::Zero(4, 8);  // dimension mismatch
  CHECK_THROWS_AS(retrieve_phase(bad), std::invalid_argument);
}

TEST_CASE("correlation frames normalize the two ports") {
  FrameGrid grid{2, 2, 1.0};
  FringeFrame f;
  f.theta = 0.25;
  f.intensity_plus = Eigen::ArrayXXd(2, 2);
  f.intensity_minus = Eigen::ArrayXXd(2, 2);
  f.intensity_plus << 3.0, 0.0, 10.0, 5.0;
  f.intensity_minus << 1.0, 0.0, 10.0, 15.0;
  FringeStack stack = correlation_frames({f}, grid);
  REQUIRE(stack.frames.size() == 1);
  CHECK(stack.thetas[0] == 0.25);
  CHECK(stack.frames[0](0, 0) == doctest::Approx(0.5));
  CHECK(stack.frames[0](0, 1) == 0.0);  // empty pixel stays zero
  CHECK(stack.frames[0](1, 0) == doctest::Approx(0.0));
  CHECK(stack.frames[0](1, 1) == doctest::Approx(-0.5));
}

TEST_CASE("combine_profiles folds the signal slope") {
  PhaseProfile s = PhaseProfile::linear(0.2, 0.0124, 0.5);
  PhaseProfile i = PhaseProfile::linear(-0.1, 0.38, 0.2);
  PhaseProfile d = combine_profiles(s, i);
  CHECK(d.kind() == PhaseProfile::Kind::linear);
  CHECK(d.slope_x() == doctest::Approx(-0.2 + 0.1));
  CHECK(d.slope_y() == doctest::Approx(-0.0124 - 0.38));
  CHECK(d.offset() == doctest::Approx(0.3));

  // sampled path: difference evaluated on the grid
  FrameGrid grid{16, 16, 10.0};
  Eigen::ArrayXXd vals(33, 33);
  for (int r = 0; r < 33; ++r)
    for (int c = 0; c < 33; ++c) vals(r, c) = 0.05 * (c - 16) - 0.02 * (r - 16);
  PhaseProfile samp = PhaseProfile::sampled(vals, -16.0, -16.0, 1.0, 1.0);
  PhaseProfile d2 = combine_profiles(samp, i, grid);
  CHECK(d2.kind() == PhaseProfile::Kind::sampled);
  KVector k = grid.center_of(3, 11);
  CHECK(d2(k) == doctest::Approx(samp({-k.kx, -k.ky}) - i(k)).epsilon(1e-12));

  // a grid the sampled domain cannot cover is refused
  FrameGrid wide{16, 16, 40.0};
  CHECK_THROWS_AS(combine_profiles(samp, i, wide), std::out_of_range);
}

TEST_CASE("fft round trip") {
  Eigen::ArrayXXd x(8, 16);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 16; ++c) x(r, c) = std::sin(0.3 * r) + 0.1 * c;
  Eigen::MatrixXcd spec = fft2(x);
  Eigen::MatrixXcd back = ifft2(spec);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 16; ++c) {
      CHECK(back(r, c).real() == doctest::Approx(x(r, c)).epsilon(1e-10));
      CHECK(std::abs(back(r, c).imag()) < 1e-10);
    }
}
