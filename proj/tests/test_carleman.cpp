#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bkinv/carleman.hpp"

using namespace bkinv;

namespace {

TensorBump parabolic_bump() {
  TensorBump b;
  b.center = {0.2, 0.3};
  b.width = {0.06, 0.2};
  b.amplitude = 1.3;
  return b;
}

TensorBump hyperbolic_bump() {
  TensorBump b;
  b.center = {0.45, -0.3, 0.2};
  b.width = {0.12, 0.1, 0.15};
  b.amplitude = 0.8;
  return b;
}

SeparableSpeed bent_speed(double a) {
  return {[a](double z) { return 1.0 / (1.0 + a * z * z); }, [a](double z) { return 1.0 / (1.0 + a * z * z); }};
}

}  // namespace

TEST_CASE("bump profile derivatives match finite differences") {
  TensorBump b = hyperbolic_bump();
  for (int axis = 0; axis < 3; ++axis) {
    double z = b.center[axis] + 0.37 * b.width[axis];
    double h = 1e-5;
    auto p = b.profile(axis, z), lo = b.profile(axis, z - h), hi = b.profile(axis, z + h);
    CHECK(p[1] == doctest::Approx((hi[0] - lo[0]) / (2 * h)).epsilon(1e-6));
    CHECK(p[2] == doctest::Approx((hi[1] - lo[1]) / (2 * h)).epsilon(1e-6));
  }
  CHECK(b.profile(0, b.center[0] + b.width[0]) == std::array<double, 3>{0.0, 0.0, 0.0});
}

TEST_CASE("parabolic binned integrals agree with direct quadrature") {
  ParabolicCwf shape;
  TensorBump b = parabolic_bump();
  auto a = [](double x, double t) { return 1.0 + 0.5 * x + 0.2 * t; };
  const double lambda = 20.0;
  ParabolicIntegrals fast(shape, a, b, 40.0);
  auto s = fast.at(lambda);

  const int n = 3001;
  double x0 = b.center[0] - b.width[0], t0 = b.center[1] - b.width[1];
  double hx = 2 * b.width[0] / (n - 1), ht = 2 * b.width[1] / (n - 1);
  double lhs = 0, grad = 0, zero = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      double x = x0 + i * hx, t = t0 + j * ht;
      double w = hx * ht * ((i == 0 || i == n - 1) ? 0.5 : 1.0) * ((j == 0 || j == n - 1) ? 0.5 : 1.0);
      auto px = b.profile(0, x), pt = b.profile(1, t);
      double u = b.amplitude * px[0] * pt[0];
      double lu = b.amplitude * (px[0] * pt[1] - a(x, t) * px[2] * pt[0]);
      double ux = b.amplitude * px[1] * pt[0];
      double psi = shape.psi(x, t);
      double phi2 = std::exp(2 * lambda * std::pow(psi, -shape.nu) - s.log_scale);
      lhs += w * lu * lu * phi2;
      grad += w * ux * ux * phi2;
      zero += w * std::pow(psi, -2 * shape.nu - 2) * u * u * phi2;
    }
  CHECK(s.lhs == doctest::Approx(lhs).epsilon(2e-3));
  CHECK(s.grad == doctest::Approx(grad).epsilon(2e-3));
  CHECK(s.zero == doctest::Approx(zero).epsilon(2e-3));
  CHECK_THROWS_AS(fast.at(41.0), Error);
}

TEST_CASE("hyperbolic separable integrals agree with a full 3D sum") {
  HyperbolicCwf shape;
  TensorBump b = hyperbolic_bump();
  SeparableSpeed speed = bent_speed(0.5);
  const int n = 81;
  const double lambda = 6.0;
  HyperbolicIntegrals sep(shape, speed, b, n);
  auto s = sep.at(lambda);

  std::array<double, 3> lo, h;
  for (int k = 0; k < 3; ++k) {
    lo[k] = b.center[k] - b.width[k];
    h[k] = 2 * b.width[k] / (n - 1);
  }
  auto tw = [&](int i) { return (i == 0 || i == n - 1) ? 0.5 : 1.0; };
  double lhs = 0, grad = 0, zero = 0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        double x = lo[0] + i * h[0], y = lo[1] + j * h[1], t = lo[2] + k * h[2];
        auto px = b.profile(0, x), py = b.profile(1, y), pt = b.profile(2, t);
        double A = b.amplitude;
        double u = A * px[0] * py[0] * pt[0];
        double lu = A * (px[0] * py[0] * pt[2] - speed.c2(x, y) * (px[2] * py[0] + px[0] * py[2]) * pt[0]);
        double g2 = A * A * (std::pow(px[1] * py[0] * pt[0], 2) + std::pow(px[0] * py[1] * pt[0], 2) +
                             std::pow(px[0] * py[0] * pt[1], 2));
        double w = tw(i) * tw(j) * tw(k) * h[0] * h[1] * h[2] *
                   std::exp(2 * lambda * shape.xi(x, y, t) - s.log_scale);
        lhs += w * lu * lu;
        grad += w * g2;
        zero += w * u * u;
      }
  CHECK(s.lhs == doctest::Approx(lhs).epsilon(1e-10));
  CHECK(s.grad == doctest::Approx(grad).epsilon(1e-10));
  CHECK(s.zero == doctest::Approx(zero).epsilon(1e-10));
}

TEST_CASE("zero function satisfies both estimates trivially") {
  ParabolicCwf p;
  p.lambda = 10;
  TensorBump b = parabolic_bump();
  b.amplitude = 0.0;
  auto r = verify_parabolic_estimate([](double, double) { return 1.0; }, b, p, 0.5);
  CHECK(r.lhs == 0.0);
  CHECK(r.holds);

  HyperbolicCwf h;
  h.lambda = 10;
  TensorBump hb = hyperbolic_bump();
  hb.amplitude = 0.0;
  auto rh = verify_hyperbolic_estimate(bent_speed(0.0), hb, h, 0.5);
  CHECK(rh.rhs == 0.0);
  CHECK(rh.holds);
}

TEST_CASE("supports outside the admissible domain are rejected") {
  ParabolicCwf p;
  TensorBump b = parabolic_bump();
  b.center[0] = 0.03;
  CHECK_THROWS_AS(check_parabolic_support(p, b), Error);
  b = parabolic_bump();
  b.center[0] = 0.35;
  b.center[1] = 0.6;
  CHECK_THROWS_AS(check_parabolic_support(p, b), Error);

  HyperbolicCwf h;
  TensorBump hb = hyperbolic_bump();
  hb.center = {0.05, 0.05, 0.0};
  CHECK_THROWS_AS(check_hyperbolic_support(h, hb), Error);
  hb = hyperbolic_bump();
  hb.center = {0.9, 0.0, 0.0};
  CHECK_THROWS_AS(check_hyperbolic_support(h, hb), Error);
}

TEST_CASE("random bumps respect the domain") {
  Rng rng(3);
  ParabolicCwf p;
  HyperbolicCwf h;
  for (int i = 0; i < 50; ++i) {
    CHECK_NOTHROW(check_parabolic_support(p, random_parabolic_bump(p, rng)));
    CHECK_NOTHROW(check_hyperbolic_support(h, random_hyperbolic_bump(h, rng)));
  }
}

TEST_CASE("radial speed condition") {
  Grid g = Grid::rect(-1, 1, 101, -1, 1, 101);
  ScalarField good(g), bad(g);
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i) {
      double r2 = g.x(i) * g.x(i) + g.y(j) * g.y(j);
      good(i, j) = 1.0 / (1.0 + 0.1 * r2);
      bad(i, j) = 1.0 + 0.1 * r2;
    }
  CHECK(speed_condition_violations(good, {0, 0}, 0.95).empty());
  CHECK(!speed_condition_violations(bad, {0, 0}, 0.95).empty());

  HyperbolicCwf h;
  h.lambda = 5;
  SeparableSpeed rising{[](double z) { return 1.0 + z * z; }, [](double z) { return 1.0 + z * z; }};
  CHECK_THROWS_WITH_AS(verify_hyperbolic_estimate(rising, hyperbolic_bump(), h, 0.5),
                       doctest::Contains("speed condition"), Error);
}

TEST_CASE("calibration picks the start of the increasing tail") {
  std::vector<double> sweep{1, 2, 4, 8, 16};
  std::vector<std::vector<double>> c{{0.5, 0.3, 0.4, 0.6, 0.9}, {0.2, 0.1, 0.05, 0.3, 0.7}};
  auto cal = calibrate(c, sweep);
  CHECK(cal.found);
  CHECK(cal.lambda_star == 4.0);
  CHECK(cal.C == doctest::Approx(0.05));

  std::vector<std::vector<double>> flat{{1, 1, 1, 1, 1}};
  CHECK(!calibrate(flat, sweep).found);
}

TEST_CASE("estimate ratio grows with lambda for a fixed bump") {
  ParabolicCwf p;
  TensorBump b = parabolic_bump();
  auto a = [](double, double) { return 1.0; };
  ParabolicIntegrals in(p, a, b, 64.0);
  double prev = 0;
  for (double lam : {16.0, 32.0, 64.0}) {
    auto s = in.at(lam);
    double c = s.lhs / (lam * p.nu * s.grad + std::pow(lam, 3) * std::pow(p.nu, 4) * s.zero);
    CHECK(c > prev);
    prev = c;
  }
}

TEST_CASE("small parabolic suite calibrates and validates") {
  ParabolicCwf p;
  auto res = parabolic_suite([](double, double) { return 1.0; }, p, geometric_sweep(1, 64, 13), 8, 8, 11);
  REQUIRE(res.calibration.found);
  CHECK(res.calibration.C > 0);
  CHECK(res.check_lambdas.size() == 3);
  CHECK(res.held_out.size() == 8);
  CHECK(res.all_hold_at_2x);
  CHECK(res.ratio_increasing);
}

TEST_CASE("volterra inequality for a constant function against closed forms") {
  const double a = 1.0, b = 1.0, lambda = 10.0;
  const int n = 200001;
  std::vector<double> g(n, 1.0);
  auto r = volterra_weight_check(g, a, [](double z) { return -z; }, lambda, b);
  double beta = 2 * lambda;
  double rb = std::sqrt(beta);
  double lhs = std::sqrt(std::numbers::pi) / (2 * beta * rb) * std::erf(rb * a) - a * std::exp(-beta * a * a) / beta;
  double g2 = std::sqrt(std::numbers::pi / beta) * std::erf(rb * a);
  CHECK(r.lhs == doctest::Approx(lhs).epsilon(1e-8));
  CHECK(r.weighted_g2 == doctest::Approx(g2).epsilon(1e-8));
  CHECK(r.rhs == doctest::Approx(g2 / (4 * lambda * b)).epsilon(1e-8));
  CHECK(r.holds);
}

TEST_CASE("volterra damping decays with lambda") {
  Rng rng(5);
  auto g = random_piecewise_smooth(20001, 1.0, rng);
  auto phi = [](double z) { return -z; };
  auto r10 = volterra_weight_check(g, 1.0, phi, 10, 1.0);
  auto r100 = volterra_weight_check(g, 1.0, phi, 100, 1.0);
  CHECK(r10.holds);
  CHECK(r100.holds);
  CHECK(r100.damping < 0.2 * r10.damping);
}

TEST_CASE("volterra rejects weights that do not decrease fast enough") {
  std::vector<double> g(101, 1.0);
  CHECK_THROWS_AS(volterra_weight_check(g, 1.0, [](double z) { return z; }, 10, 1.0), Error);
  CHECK_THROWS_AS(volterra_weight_check(g, 1.0, [](double z) { return -0.5 * z; }, 10, 1.0), Error);
  CHECK_THROWS_AS(volterra_weight_check(std::vector<double>(100, 1.0), 1.0, [](double z) { return -z; }, 10, 1.0),
                  Error);
}
