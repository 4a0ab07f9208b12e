#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bkinv/forward.hpp"
#include "bkinv/rng.hpp"

using namespace bkinv;

TEST_CASE("coefficient model invariants") {
  Grid g = Grid::line(0.0, 1.0, 11);
  auto m = CoefficientModel::background(g, 5.0);
  CHECK_NOTHROW(m.validate());
  m.c(5) = 7.0;
  CHECK_THROWS_AS(m.validate(), Error);
  m.clamp();
  CHECK(m.c(5) == 5.0);
  m.c(1) = 2.0;
  CHECK_THROWS_AS(m.validate(), Error);
  m.reset_edges();
  CHECK_NOTHROW(m.validate());
  m.d = 2.0;
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("mollified source has unit discrete mass") {
  Grid g = Grid::rect(-1.0, 1.0, 81, -1.0, 1.0, 81);
  auto src = MollifiedSource::on_grid(g, {0.1, -0.2});
  CHECK(src.eps == doctest::Approx(3.0 * g.h[0]));
  CHECK(std::abs(integrate(src.sample(g)) - 1.0) < 1e-6);
}

TEST_CASE("wave with zero source stays zero") {
  Grid g = Grid::line(-3.0, 3.0, 301);
  auto c = CoefficientModel::background(g, 5.0);
  SubBox om = SubBox::from_coords(g, -0.5, 0.5);
  ScalarField zero(g);
  auto res = wave_evolve(c.c, zero, zero, 1.0, om);
  for (double v : res.trace.values) CHECK(v == 0.0);
}

TEST_CASE("wave rejects bad cfl and insufficient padding") {
  Grid g = Grid::line(-2.0, 2.0, 201);
  auto c = CoefficientModel::background(g, 5.0);
  SubBox om = SubBox::from_coords(g, -0.5, 0.5);
  auto src = MollifiedSource::on_grid(g, {-1.0, 0.0});
  WaveOptions o;
  o.cfl = 0.95;
  CHECK_THROWS_AS(wave_forward(c, src, 1.0, om, o), Error);
  CHECK_THROWS_WITH_AS(wave_forward(c, src, 3.0, om), doctest::Contains("padding"), Error);
  CHECK_NOTHROW(wave_forward(c, src, 1.0, om));
}

TEST_CASE("1D wave energy is conserved and the pulse travels at unit speed") {
  Grid g = Grid::line(-4.0, 4.0, 1601);
  auto c = CoefficientModel::background(g, 5.0);
  SubBox om = SubBox::from_coords(g, -1.0, 1.0);
  // Displacement pulse so the peak position is well defined.
  ScalarField u0(g), ut0(g);
  for (int i = 0; i < g.n[0]; ++i) u0(i) = std::exp(-std::pow(g.x(i) / 0.1, 2));
  auto res = wave_evolve(c.c, u0, ut0, 2.0, om);
  // Energy on the staggered half-step, early versus late.
  WaveOptions fine;
  fine.snapshot_stride = 1;
  auto dense = wave_evolve(c.c, u0, ut0, 2.0, om, fine);
  auto denergy = [&](int k) {
    const auto& a = dense.snapshots[k];
    const auto& b = dense.snapshots[k + 1];
    ScalarField e(g);
    for (int i = 0; i < g.n[0] - 1; ++i) {
      double ut = 0.5 * ((b(i) - a(i)) + (b(i + 1) - a(i + 1))) / dense.dt;
      double ux = 0.5 * ((a(i + 1) - a(i)) + (b(i + 1) - b(i))) / g.h[0];
      e(i) = ut * ut + ux * ux;
    }
    return integrate(e);
  };
  double e_early = denergy(100);
  double e_late = denergy(dense.steps - 1);
  CHECK(std::abs(e_late - e_early) / e_early < 0.01);

  // Right-moving half of the pulse reaches x = 1 at t = 1.
  int node = 1;  // right end of the measurement box
  auto series = res.trace.series(node);
  int kmax = 0;
  for (int k = 0; k < res.trace.samples; ++k)
    if (series[k] > series[kmax]) kmax = k;
  double arrival = kmax * res.dt;
  CHECK(std::abs(arrival - 1.0) <= 2.0 * g.h[0]);
}

TEST_CASE("threaded leapfrog step matches the serial reference in 2D") {
  Grid g = Grid::rect(-1.0, 1.0, 161, -1.0, 1.0, 161);
  ScalarField c(g, 1.0), u(g), up(g), n1(g), n2(g);
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i) {
      c(i, j) = 1.0 + 0.5 * std::exp(-10 * (g.x(i) * g.x(i) + g.y(j) * g.y(j)));
      u(i, j) = std::sin(3 * g.x(i)) * std::cos(2 * g.y(j));
      up(i, j) = 0.9 * u(i, j);
    }
  leapfrog_step(c, u, up, 0.004, n1);
  leapfrog_step_serial(c, u, up, 0.004, n2);
  for (std::size_t k = 0; k < g.size(); ++k) CHECK(n1.v[k] == doctest::Approx(n2.v[k]).epsilon(1e-14));
}

TEST_CASE("wave trace is deterministic") {
  Grid g = Grid::rect(-2.0, 2.0, 61, -2.0, 2.0, 61);
  auto c = CoefficientModel::background(g, 5.0);
  c.c(30, 30) = 2.0;
  SubBox om = SubBox::from_coords(g, -0.5, 0.5, -0.5, 0.5);
  auto src = MollifiedSource::on_grid(g, {-0.9, 0.0});
  auto a = wave_forward(c, src, 0.8, om);
  auto b = wave_forward(c, src, 0.8, om);
  CHECK(a.trace.values == b.trace.values);
}

TEST_CASE("1D elliptic solve matches the fundamental solution") {
  Grid g = Grid::line(-2.0, 2.0, 4001);
  auto c = CoefficientModel::background(g, 5.0);
  MollifiedSource src;
  src.x0 = {0.0, 0.0};
  src.eps = 3.0 * g.h[0];
  for (double s : {1.0, 4.0, 10.0}) {
    auto w = elliptic_solve(c, s, src);
    double worst = 0.0;
    for (int i = 0; i < g.n[0]; ++i) {
      double r = std::abs(g.x(i));
      if (r < 0.05) continue;
      double exact = std::exp(-s * r) / (2.0 * s);
      worst = std::max(worst, std::abs(w(i) - exact) / exact);
    }
    CHECK(worst <= 0.01);
  }
}

TEST_CASE("elliptic solve is linear, monotone and satisfies the discrete equation") {
  Grid g = Grid::line(-1.0, 1.0, 801);
  auto c = CoefficientModel::background(g, 5.0);
  MollifiedSource src;
  src.eps = 3.0 * g.h[0];
  auto w1 = elliptic_solve(c, 3.0, src);
  EllipticOptions o;
  o.source_scale = 2.0;
  auto w2 = elliptic_solve(c, 3.0, src, o);
  for (std::size_t k = 0; k < w1.size(); ++k) CHECK(w2.v[k] == doctest::Approx(2.0 * w1.v[k]).epsilon(1e-10));
  int mid = 400;
  for (int i = mid + 1; i < g.n[0]; ++i) CHECK(w1(i) < w1(i - 1));
  for (int i = mid - 1; i >= 0; --i) CHECK(w1(i) < w1(i + 1));

  Grid r = Grid::rect(-1.0, 1.0, 81, -1.0, 1.0, 81);
  auto c2 = CoefficientModel::background(r, 5.0);
  for (int j = 20; j < 60; ++j)
    for (int i = 20; i < 60; ++i) c2.c(i, j) = 2.0;
  MollifiedSource s2 = MollifiedSource::on_grid(r, {-0.6, 0.1});
  auto w = elliptic_solve(c2, 2.0, s2);
  auto lap = laplacian(w);
  auto delta = s2.sample(r);
  double res = 0.0, scale = 0.0;
  for (int j = 1; j < 80; ++j)
    for (int i = 1; i < 80; ++i) {
      res = std::max(res, std::abs(lap(i, j) - 4.0 * c2.c(i, j) * w(i, j) + delta(i, j)));
      scale = std::max(scale, std::abs(delta(i, j)));
    }
  CHECK(res / scale <= 1e-10);
  for (int j = 1; j < 80; ++j)
    for (int i = 1; i < 80; ++i) CHECK(w(i, j) > 0.0);
  CHECK_THROWS_AS(elliptic_solve(c2, 0.0, s2), Error);
}

TEST_CASE("elliptic solve reports positivity violations") {
  Grid g = Grid::line(-1.0, 1.0, 5);
  auto c = CoefficientModel::background(g, 5.0);
  ScalarField rhs(g);
  rhs(2) = -1.0;
  CHECK_THROWS_WITH_AS(elliptic_solve_rhs(c, 2.0, rhs), doctest::Contains("positivity"), Error);
}

TEST_CASE("harmonic solve: constants, affine data and the maximum principle") {
  Grid g = Grid::rect(0.0, 1.0, 21, 0.0, 2.0, 31);
  auto p = harmonic_solve(ScalarField(g, 4.2));
  for (double v : p.v) CHECK(v == doctest::Approx(4.2).epsilon(1e-11));
  ScalarField b(g);
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i) b(i, j) = g.x(i);
  auto px = harmonic_solve(b);
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i) CHECK(std::abs(px(i, j) - g.x(i)) < 1e-11);

  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    ScalarField r(g);
    double lo = 1e300, hi = -1e300;
    for (int j = 0; j < g.n[1]; ++j)
      for (int i = 0; i < g.n[0]; ++i)
        if (g.on_boundary(i, j)) {
          r(i, j) = rng.uniform(-1.0, 1.0);
          lo = std::min(lo, r(i, j));
          hi = std::max(hi, r(i, j));
        }
    auto h = harmonic_solve(r);
    bool ok = true;
    for (double v : h.v) ok = ok && v >= lo - 1e-12 && v <= hi + 1e-12;
    CHECK(ok);
  }
}

TEST_CASE("heat solve: zero data, separation of variables, max principle") {
  Grid g = Grid::line(0.0, 1.0, 1001);
  ScalarField c(g, 1.0), zero(g);
  SubBox om = SubBox::whole(g);
  auto z = heat_forward(c, zero, 0.01, 1e-3, om, 5);
  for (const auto& f : z.snapshots) CHECK(max_abs(f) == 0.0);

  ScalarField f0(g);
  for (int i = 0; i < g.n[0]; ++i) f0(i) = std::sin(std::numbers::pi * g.x(i));
  auto res = heat_forward(c, f0, 0.1, 1e-5, om, 1000);
  const auto& last = res.snapshots.back();
  CHECK(res.snapshot_times.back() == doctest::Approx(0.1));
  double decay = std::exp(-std::numbers::pi * std::numbers::pi * 0.1);
  double worst = 0.0;
  for (int i = 1; i < g.n[0] - 1; ++i) {
    double exact = decay * f0(i);
    if (exact > 0.05) worst = std::max(worst, std::abs(last(i) - exact) / exact);
  }
  CHECK(worst <= 0.01);
  for (std::size_t k = 1; k < res.snapshots.size(); ++k)
    CHECK(max_abs(res.snapshots[k]) <= max_abs(res.snapshots[k - 1]) + 1e-15);
  // Neumann trace at x = 0 is outward: -pi e^{-pi^2 t}.
  double q0 = res.neumann.at(0, res.steps);
  CHECK(q0 == doctest::Approx(-std::numbers::pi * decay).epsilon(1e-3));
}

TEST_CASE("heat solve commutes with reflection") {
  Grid g = Grid::rect(-1.0, 1.0, 41, -1.0, 1.0, 41);
  ScalarField c(g, 1.0), f0(g);
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i) {
      double x = g.x(i), y = g.y(j);
      c(i, j) = 1.0 + 0.3 * x * x;
      f0(i, j) = std::exp(-4 * ((x - 0.2) * (x - 0.2) + y * y)) + std::exp(-4 * ((x + 0.2) * (x + 0.2) + y * y));
    }
  auto res = heat_forward(c, f0, 0.05, 0.005, SubBox::whole(g), 1);
  double worst = 0.0;
  for (const auto& f : res.snapshots)
    for (int j = 0; j < g.n[1]; ++j)
      for (int i = 0; i < g.n[0]; ++i) worst = std::max(worst, std::abs(f(i, j) - f(g.n[0] - 1 - i, j)));
  CHECK(worst <= 1e-12);
}

TEST_CASE("outward derivative uses the normal of the starting edge") {
  Grid g = Grid::rect(0.0, 1.0, 11, 0.0, 1.0, 11);
  ScalarField f(g);
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i) f(i, j) = 2.0 * g.x(i) + 3.0 * g.y(j) * g.y(j);
  SubBox box = SubBox::from_coords(g, 0.2, 0.8, 0.2, 0.8);
  CHECK(outward_derivative(f, box, g.index(5, 2)) == doctest::Approx(-1.2));
  CHECK(outward_derivative(f, box, g.index(8, 5)) == doctest::Approx(2.0));
  CHECK(outward_derivative(f, box, g.index(5, 8)) == doctest::Approx(4.8));
  CHECK(outward_derivative(f, box, g.index(2, 5)) == doctest::Approx(-2.0));
  CHECK(outward_derivative(f, box, g.index(2, 2)) == doctest::Approx(-1.2));
  CHECK_THROWS_AS(outward_derivative(f, box, g.index(5, 5)), Error);
}
