#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "ghostlab/analysis.hpp"
#include "ghostlab/errors.hpp"
#include "ghostlab/kspace.hpp"
#include "ghostlab/measurement.hpp"
#include "ghostlab/montecarlo.hpp"

using namespace ghostlab;

namespace {

// Frames with exact cosine counts: n+ = N (1 + V cos(psi)) / 2 at the bin
// centre, psi = joint(k) + theta_s - theta_i. The generator is the oracle.
FrameSet cosine_frames(const FrameGrid& grid, const Setting& setting,
                       const PhaseProfile& joint, double v,
                       std::int64_t n_per_bin) {
  FrameSet fs = FrameSet::zeros(grid, setting);
  double shift = setting.is_marginal()
                     ? 0.0
                     : setting.theta_s() - setting.theta_i();
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix) {
      double psi = joint(grid.center_of(ix, iy)) + shift;
      double p = setting.is_marginal() ? 0.5
                                       : 0.5 * (1.0 + v * std::cos(psi));
      auto np = static_cast<std::int64_t>(std::llround(n_per_bin * p));
      fs.counts_plus(iy, ix) = np;
      fs.counts_minus(iy, ix) = n_per_bin - np;
    }
  fs.trials = fs.readouts = fs.bucket_clicks = fs.total_counts();
  return fs;
}

}  // namespace

TEST_CASE("correlation map from raw counts") {
  FrameGrid grid{2, 2, 1.0};
  FrameSet fs = FrameSet::zeros(grid, Setting::angles(0.0, 0.0));
  fs.counts_plus << 30, 0, 10, 7;
  fs.counts_minus << 10, 0, 30, 7;
  CorrelationMap m = correlation_map(fs);

  CHECK(m.mask(0, 0));
  CHECK_FALSE(m.mask(0, 1));  // empty bin is masked
  CHECK(m.c(0, 0) == doctest::Approx(0.5));
  CHECK(m.c(1, 0) == doctest::Approx(-0.5));
  CHECK(m.c(1, 1) == doctest::Approx(0.0));
  CHECK(m.n(0, 0) == 40);
  CHECK(m.c_err(0, 0) == doctest::Approx(std::sqrt((1.0 - 0.25) / 40.0)));

  // two-FrameSet form: plus counts from the first, minus from the second
  FrameSet minus = FrameSet::zeros(grid, Setting::angles(0.0, 0.0));
  minus.counts_minus << 10, 4, 30, 7;
  CorrelationMap m2 = correlation_map(fs, minus);
  CHECK(m2.mask(0, 1));
  CHECK(m2.c(0, 1) == doctest::Approx(-1.0));

  FrameSet other = FrameSet::zeros(FrameGrid{2, 2, 2.0}, fs.setting);
  CHECK_THROWS_AS(correlation_map(fs, other), std::invalid_argument);
}

TEST_CASE("pooled correlation") {
  FrameGrid grid{2, 1, 1.0};
  FrameSet fs = FrameSet::zeros(grid, Setting::marginal(0.0));
  fs.counts_plus << 600, 0;
  fs.counts_minus << 400, 0;
  ValueWithError c = pooled_c(correlation_map(fs));
  CHECK(c.value == doctest::Approx(0.2));
  CHECK(c.error == doctest::Approx(std::sqrt((1.0 - 0.04) / 1000.0)));

  FrameSet empty = FrameSet::zeros(grid, Setting::marginal(0.0));
  CHECK_THROWS_AS(pooled_c(correlation_map(empty)), InsufficientDataError);
}

TEST_CASE("fringe fit recovers the generator visibility and offset") {
  FrameGrid grid{8, 64, 25.0};
  PhaseProfile joint = PhaseProfile::linear(0.0, -0.3924, 0.0);
  const double v_true = 0.786;

  SUBCASE("plain fringe") {
    FrameSet fs = cosine_frames(grid, Setting::angles(0.0, 0.0), joint, v_true,
                                1000000);
    FringeFit fit = fringe_fit(correlation_map(fs), joint, Axis::x);
    CHECK(fit.n_points == 64);
    CHECK_FALSE(fit.clipped);
    CHECK(fit.visibility == doctest::Approx(v_true).epsilon(2e-3));
    CHECK(std::abs(fit.offset) < 2e-3);
  }

  SUBCASE("offset fringe") {
    // pi/2 analyzer shift shows up as the fitted offset
    FrameSet fs = cosine_frames(grid, Setting::angles(M_PI / 2.0, 0.0), joint,
                                v_true, 1000000);
    FringeFit fit = fringe_fit(correlation_map(fs), joint, Axis::x);
    CHECK(fit.visibility == doctest::Approx(v_true).epsilon(2e-3));
    CHECK(fit.offset == doctest::Approx(M_PI / 2.0).epsilon(2e-3));
  }

  SUBCASE("constant phase is degenerate") {
    PhaseProfile flat = PhaseProfile::linear(0.0, 0.0, 0.0);
    FrameSet fs = cosine_frames(grid, Setting::angles(0.0, 0.0), flat, v_true,
                                100000);
    CHECK_THROWS_AS(fringe_fit(correlation_map(fs), flat, Axis::x),
                    NumericError);
  }
}

TEST_CASE("chsh combination arithmetic") {
  std::array<ValueWithError, 4> vis{ValueWithError{0.779, 0.003},
                                    ValueWithError{0.786, 0.003},
                                    ValueWithError{0.772, 0.003},
                                    ValueWithError{0.789, 0.003}};
  ValueWithError c_inf{0.001, 0.0005};
  ChshResult r = bell_s_chsh(vis, c_inf);
  double expect = (0.779 + 0.786 + 0.772 + 0.789) / std::sqrt(2.0) - 0.002;
  CHECK(r.s.value == doctest::Approx(expect).epsilon(1e-12));
  double var = 4.0 * (0.003 * 0.003 / 2.0) + 4.0 * 0.0005 * 0.0005;
  CHECK(r.s.error == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  CHECK(r.sd_violation == doctest::Approx((expect - 2.0) / r.s.error));

  // no violation, no significance
  std::array<ValueWithError, 4> low{ValueWithError{0.5, 0.01},
                                    ValueWithError{0.5, 0.01},
                                    ValueWithError{0.5, 0.01},
                                    ValueWithError{0.5, 0.01}};
  ChshResult r2 = bell_s_chsh(low, {0.0, 0.0});
  CHECK(r2.s.value == doctest::Approx(std::sqrt(2.0)));
  CHECK(r2.sd_violation == 0.0);
}

TEST_CASE("raw chsh pooling approaches 2 sqrt(2) V") {
  FrameGrid grid{4, 1024, 25.0};  // fine rows so the window is well sampled
  PhaseProfile joint = PhaseProfile::linear(0.0, -0.3924, 0.0);
  const double v_true = 0.9;
  std::vector<CorrelationMap> maps;
  for (auto [ts, ti] : {std::pair{0.0, 0.0}, {M_PI / 2, 0.0}, {0.0, M_PI / 2},
                        {M_PI / 2, M_PI / 2}}) {
    maps.push_back(correlation_map(
        cosine_frames(grid, Setting::angles(ts, ti), joint, v_true, 1000000)));
  }
  ChshResult raw = bell_s_chsh_raw(maps, joint, {0.0, 0.0});
  // finite window averages the cosine: expect 2 sqrt(2) V sin(w)/w
  const double w = 0.17453292519943295;
  double expect = 2.0 * std::sqrt(2.0) * v_true * std::sin(w) / w;
  CHECK(raw.s.value == doctest::Approx(expect).epsilon(0.01));

  maps.pop_back();
  CHECK_THROWS_AS(bell_s_chsh_raw(maps, joint, {0.0, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("single-image estimator recovers V and S") {
  FrameGrid grid{64, 64, 25.0};
  PhaseProfile joint = PhaseProfile::linear(0.0, -0.3924, 0.0);
  const double v_true = 0.786;
  FrameSet fs =
      cosine_frames(grid, Setting::angles(0.0, 0.0), joint, v_true, 1000000);
  // handing the profile pair whose difference is `joint`
  PhaseProfile phase_s = PhaseProfile::linear(0.0, 0.0124, 0.0);
  PhaseProfile phase_i = PhaseProfile::linear(0.0, 0.38, 0.0);
  FreedmanResult r = bell_s_freedman(fs, phase_s, phase_i, {0.0, 0.0});

  CHECK(r.v.value == doctest::Approx(v_true).epsilon(5e-3));
  CHECK(r.s.value ==
        doctest::Approx(2.0 * std::sqrt(2.0) * v_true).epsilon(5e-3));
  CHECK(r.sd_violation > 3.0);
  CHECK(r.curve.size() == 36);
  std::int64_t pooled = 0;
  for (const auto& b : r.curve) pooled += b.n;
  CHECK(pooled == fs.total_counts());

  SUBCASE("marginal frames are rejected") {
    FrameSet m = cosine_frames(grid, Setting::marginal(0.0), joint, 0.0, 1000);
    CHECK_THROWS_AS(bell_s_freedman(m, phase_s, phase_i, {0.0, 0.0}),
                    std::invalid_argument);
  }
  SUBCASE("sub-2pi phase span is refused") {
    PhaseProfile nearly_flat = PhaseProfile::linear(0.0, 0.01, 0.0);
    FrameSet fs2 = cosine_frames(grid, Setting::angles(0.0, 0.0), nearly_flat,
                                 v_true, 1000);
    CHECK_THROWS_AS(bell_s_freedman(fs2, PhaseProfile::linear(0, 0, 0),
                                    nearly_flat.scaled(-1.0), {0.0, 0.0}),
                    InsufficientDataError);
  }
}

TEST_CASE("local models never beat 2, quantum cosine reaches 2 sqrt(2)") {
  CHECK(lhv_exhaustive_max() == 2.0);
  double bound = lhv_bound_oracle(100000, 99);
  CHECK(bound <= 2.0 + 1e-12);  // up to rounding of the mixture averages
  CHECK(bound > 1.99);
  CHECK(std::abs(quantum_s_closed_form(1.0, 0.0) - 2.0 * std::sqrt(2.0)) <
        1e-15);
  CHECK(quantum_s_closed_form(0.5, 0.0) < 2.0);  // V = 1/2 does not violate
  CHECK(quantum_s_closed_form(0.786, 0.0013) ==
        doctest::Approx(2.0 * std::sqrt(2.0) * 0.786 - 0.0026));
  // threshold visibility for violation is 1/sqrt(2)
  CHECK(quantum_s_closed_form(1.0 / std::sqrt(2.0), 0.0) ==
        doctest::Approx(2.0));
}
