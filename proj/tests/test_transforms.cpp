#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <string>

#include "bkinv/forward.hpp"
#include "bkinv/log.hpp"
#include "bkinv/transforms.hpp"

using namespace bkinv;

namespace {

std::vector<double> samples(int n, double dt, auto fn) {
  std::vector<double> u(n);
  for (int k = 0; k < n; ++k) u[k] = fn(k * dt);
  return u;
}

}  // namespace

TEST_CASE("partition layout") {
  PseudoFreqPartition p;
  p.s_min = 1.0;
  p.s_max = 8.0;
  p.N = 14;
  CHECK(p.h() == doctest::Approx(0.5));
  CHECK(p.s(0) == 8.0);
  CHECK(p.s(14) == 1.0);
  for (int n = 1; n <= 14; ++n) CHECK(p.s(n) < p.s(n - 1));
  auto fine = p.fine_grid();
  CHECK(fine.size() == 141);
  CHECK(fine.back() == 1.0);
  p.N = 0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("laplace transform of exp(-t)") {
  const double dt = 1e-4;
  auto u = samples(300001, dt, [](double t) { return std::exp(-t); });
  CHECK(std::abs(laplace_transform(u, dt, 5.0) - 1.0 / 6.0) <= 1e-8);
  std::vector<double> zero(1000, 0.0);
  CHECK(laplace_transform(zero, 0.01, 3.0) == 0.0);
}

TEST_CASE("laplace transform is linear and second order in dt") {
  auto err = [](double dt) {
    auto u = samples(static_cast<int>(20.0 / dt) + 1, dt, [](double t) { return t * std::exp(-t); });
    return std::abs(laplace_transform(u, dt, 2.0) - 1.0 / 9.0);
  };
  double ratio = err(0.01) / err(0.005);
  CHECK(ratio >= 3.5);
  CHECK(ratio <= 4.5);

  auto a = samples(2001, 0.01, [](double t) { return std::sin(t); });
  auto b = samples(2001, 0.01, [](double t) { return std::exp(-2 * t); });
  std::vector<double> c(a.size());
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = 3.0 * a[k] - 0.25 * b[k];
  double lin = 3.0 * laplace_transform(a, 0.01, 4.0) - 0.25 * laplace_transform(b, 0.01, 4.0);
  CHECK(laplace_transform(c, 0.01, 4.0) == doctest::Approx(lin).epsilon(1e-14));
}

TEST_CASE("laplace transform warns with a tail bound when truncated") {
  std::string captured;
  set_warning_sink([&](const std::string& m) { captured = m; });
  auto u = samples(101, 0.01, [](double) { return 1.0; });
  LaplaceValue r = laplace_value(u, 0.01, 2.0);
  CHECK(r.truncated);
  CHECK(r.tail_bound == doctest::Approx(std::exp(-2.0) / 2.0));
  laplace_transform(u, 0.01, 2.0);
  CHECK(captured.find("tail bound") != std::string::npos);
  captured.clear();
  laplace_transform(u, 0.01, 40.0);
  CHECK(captured.empty());
  set_warning_sink(nullptr);
}

TEST_CASE("reznickaya kernel normalization and rejection of t <= 0") {
  const double dtau = 1e-3;
  std::vector<double> one(20001, 1.0);
  for (double t : {0.01, 0.1, 1.0, 5.0}) CHECK(std::abs(reznickaya(one, dtau, t) - 1.0) <= 1e-6);
  CHECK_THROWS_AS(reznickaya(one, dtau, 0.0), Error);
  CHECK_THROWS_AS(reznickaya(one, dtau, 1e-7), Error);
}

TEST_CASE("reznickaya derivative identity for cos") {
  const double dtau = 5e-4, w = 2.0;
  auto g = samples(30001, dtau, [&](double t) { return std::cos(w * t); });
  auto g2 = samples(30001, dtau, [&](double t) { return -w * w * std::cos(w * t); });
  for (double t : {0.1, 0.5, 1.0}) {
    const double dt = 1e-4;
    double deriv = (reznickaya(g, dtau, t + dt) - reznickaya(g, dtau, t - dt)) / (2 * dt);
    CHECK(std::abs(reznickaya(g2, dtau, t) - deriv) <= 1e-5);
    // closed form of the transform: exp(-w^2 t)
    CHECK(std::abs(reznickaya(g, dtau, t) - std::exp(-w * w * t)) <= 1e-6);
  }
}

TEST_CASE("reznickaya approaches g(0) monotonically as t decreases") {
  const double dtau = 1e-5;
  auto g = samples(200001, dtau, [](double t) { return 1.0 + t + std::sin(3 * t); });
  double prev = 1e300;
  for (double t : {1e-2, 1e-3, 1e-4}) {
    double e = std::abs(reznickaya(g, dtau, t) - 1.0);
    CHECK(e < prev);
    prev = e;
  }
  CHECK(prev < 0.05);
}

TEST_CASE("compute_v closed forms and rejection") {
  Grid g = Grid::line(0.0, 1.0, 5);
  auto v = compute_v(ScalarField(g, 1.0), 3.0);
  for (double x : v.v) CHECK(x == 0.0);
  const double s = 2.0;
  ScalarField w(g, std::exp(-s * 1.0) / (2 * s));
  CHECK(compute_v(w, s)(2) == doctest::Approx((-2.0 - std::log(4.0)) / 4.0));
  w(3) = 0.0;
  CHECK_THROWS_AS(compute_v(w, s), Error);
}

TEST_CASE("compute_q: constant, a/s form and telescoping") {
  Grid g = Grid::line(0.0, 1.0, 11);
  ScalarField a(g);
  for (int i = 0; i < 11; ++i) a(i) = 1.0 + g.x(i) * g.x(i);
  auto field_at = [&](double s) {
    ScalarField v(g);
    for (std::size_t k = 0; k < v.size(); ++k) v.v[k] = a.v[k] / s;
    return v;
  };
  auto q0 = compute_q(ScalarField(g, 2.0), ScalarField(g, 2.0), 0.01);
  for (double x : q0.v) CHECK(x == 0.0);
  const double s = 3.0;
  auto err = [&](double ds) {
    auto q = compute_q(field_at(s - ds), field_at(s + ds), ds);
    double e = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) e = std::max(e, std::abs(q.v[k] + a.v[k] / (s * s)));
    return e;
  };
  CHECK(err(0.01) < 1e-5);
  CHECK(err(0.02) / err(0.01) == doctest::Approx(4.0).epsilon(0.05));
  // v(s) = int_s^smax q + v(smax) on a fine s grid
  const double smax = 8.0, ds = 0.01;
  int m = static_cast<int>((smax - s) / ds + 0.5);
  ScalarField acc = field_at(smax);
  for (int k = 0; k < m; ++k) {
    double s_hi = smax - k * ds, s_lo = s_hi - ds;
    auto qa = compute_q(field_at(s_hi - 1e-4), field_at(s_hi + 1e-4), 1e-4);
    auto qb = compute_q(field_at(s_lo - 1e-4), field_at(s_lo + 1e-4), 1e-4);
    for (std::size_t i = 0; i < acc.size(); ++i) acc.v[i] -= 0.5 * ds * (qa.v[i] + qb.v[i]);
  }
  auto exact = field_at(s);
  for (std::size_t i = 0; i < acc.size(); ++i) CHECK(acc.v[i] == doctest::Approx(exact.v[i]).epsilon(1e-5));
}

TEST_CASE("psi closed forms") {
  const double k = 0.7;
  for (double s : {2.0, 5.0}) {
    double ds = 1e-3;
    double psi = psi_from_phi(std::exp(-(s - ds) * k), std::exp(-s * k), std::exp(-(s + ds) * k), s, ds);
    CHECK(psi == doctest::Approx(k / (s * s)).epsilon(1e-6));
    CHECK(psi_from_phi(1.0, 1.0, 1.0, s, ds) == 0.0);
  }
  CHECK_THROWS_AS(psi_from_phi(1.0, -1.0, 1.0, 2.0, 0.01), Error);

  // trace g(t) = exp(-a t) transforms to 1/(s+a)
  Grid g = Grid::line(0.0, 1.0, 3);
  BoundaryTrace tr = make_trace(g, {0, 2}, 40001, 1e-3);
  const double a = 1.5;
  for (int k = 0; k < tr.samples; ++k) tr.at(0, k) = tr.at(1, k) = std::exp(-a * k * tr.dt);
  const double s = 3.0;
  auto psi = boundary_psi(tr, s, 1e-3);
  double exact = -1.0 / ((s + a) * s * s) + 2.0 * std::log(s + a) / (s * s * s);
  CHECK(psi[0] == doctest::Approx(exact).epsilon(1e-5));
}

TEST_CASE("boundary psi from wave data matches q from elliptic solves") {
  Grid g = Grid::line(-6.0, 6.0, 4001);
  auto c = CoefficientModel::background(g, 5.0);
  for (int i = 0; i < g.n[0]; ++i)
    if (std::abs(g.x(i) - 0.1) < 0.2) c.c(i) = 3.0;
  SubBox om = SubBox::from_coords(g, -0.5, 0.5);
  auto src = MollifiedSource::on_grid(g, {-1.0, 0.0});
  auto wave = wave_forward(c, src, 7.0, om);
  const double s = 4.0, ds = 1e-3;
  auto psi = boundary_psi(wave.trace, s, ds);
  auto q = compute_q(compute_v(elliptic_solve(c, s - ds, src), s - ds),
                     compute_v(elliptic_solve(c, s + ds, src), s + ds), ds);
  auto nodes = om.boundary_nodes(g);
  for (std::size_t b = 0; b < nodes.size(); ++b) CHECK(std::abs(psi[b] - q.v[nodes[b]]) <= 1e-4);
}

TEST_CASE("elliptic output satisfies the Riccati form to O(h)") {
  auto residual = [](int n) {
    Grid g = Grid::line(-2.0, 2.0, n);
    auto c = CoefficientModel::background(g, 5.0);
    for (int i = 0; i < n; ++i) {
      double x = g.x(i);
      if (std::abs(x) < 1.0) c.c(i) = 1.0 + 1.5 * std::pow(std::cos(0.5 * std::numbers::pi * x), 2);
    }
    MollifiedSource src;
    src.x0 = {-1.6, 0.0};
    src.eps = 3.0 * g.h[0];
    const double s = 3.0;
    auto v = compute_v(elliptic_solve(c, s, src), s);
    auto lap = laplacian(v);
    auto g2 = grad_squared(v);
    double worst = 0.0;
    for (int i = 0; i < n; ++i)
      if (std::abs(g.x(i)) < 1.2) worst = std::max(worst, std::abs(lap(i) + s * s * g2(i) - c.c(i)));
    return worst;
  };
  double r1 = residual(801), r2 = residual(1601);
  CHECK(r1 < 0.05);
  CHECK(r2 < r1 * 0.6);
}
