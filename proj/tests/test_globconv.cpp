#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "bkinv/globconv.hpp"
#include "bkinv/rng.hpp"

using namespace bkinv;

namespace {

// Exact weighted moments int_0^h rho^k exp(-lambda rho) d rho.
double moment(int k, double lambda, double h) {
  double fact = 1, partial = 0, term = 1;
  for (int j = 0; j <= k; ++j) {
    if (j > 0) {
      fact *= j;
      term *= lambda * h / j;
    }
    partial += term;
  }
  return fact / std::pow(lambda, k + 1) * (1.0 - std::exp(-lambda * h) * partial);
}

struct Line {
  GlobconvSetup setup;
  CoefficientModel truth;
};

Line line_setup(bool inclusion, double h = 0.005) {
  Line l;
  l.setup.grid = Grid::line_spacing(-1.6, 2.6, h);
  l.setup.omega = SubBox::from_coords(l.setup.grid, 0.0, 1.0);
  l.setup.source = MollifiedSource::on_grid(l.setup.grid, {-0.4, 0.0}, 3.0);
  l.truth = CoefficientModel::background(l.setup.grid, 5.0);
  if (inclusion)
    for (int i = 0; i < l.setup.grid.n[0]; ++i) {
      double x = l.setup.grid.x(i);
      if (x >= 0.4 - 1e-9 && x <= 0.6 + 1e-9) l.truth.c(i) = 4.0;
    }
  return l;
}

// Transformed boundary data by direct elliptic solves.
BoundaryPseudoFreq elliptic_data(const Line& l, const PseudoFreqPartition& p) {
  auto s = pseudo_frequency_samples(p);
  std::vector<std::vector<double>> phi;
  for (double sv : s)
    phi.push_back(boundary_values(restrict_to(elliptic_solve(l.truth, sv, l.setup.source), l.setup.omega)));
  return pseudo_frequency_data(s, phi);
}

double rel_l2(const ScalarField& a, const ScalarField& b) {
  double n = 0, d = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    n += (a.v[k] - b.v[k]) * (a.v[k] - b.v[k]);
    d += b.v[k] * b.v[k];
  }
  return std::sqrt(n / d);
}

}  // namespace

TEST_CASE("layer coefficients match exact moments and a finer quadrature") {
  PseudoFreqPartition p;
  for (double lambda : {2.0, 10.0, 50.0, 100.0}) {
    for (int n : {1, 7, 14}) {
      auto c = derive_layer_coefficients(p, lambda, n);
      auto fine = derive_layer_coefficients(p, lambda, n, 200000);
      const double top = p.s(n - 1), h = p.h();
      const double m0 = moment(0, lambda, h), m1 = moment(1, lambda, h), m2 = moment(2, lambda, h),
                   m3 = moment(3, lambda, h);
      // s = top - rho expanded in powers of rho.
      const double a1 = (2 * top * top * m0 - 8 * top * m1 + 6 * m2) / m0;
      const double a2 = 2 * (top * m0 - m1) / m0;
      const double kappa = (-2 * top * top * m1 + 6 * top * m2 - 4 * m3) / m0;
      CHECK(c.a1 == doctest::Approx(a1).epsilon(1e-10));
      CHECK(c.a2 == doctest::Approx(a2).epsilon(1e-10));
      CHECK(c.kappa == doctest::Approx(kappa).epsilon(1e-10));
      CHECK(c.weight_mass == doctest::Approx(m0).epsilon(1e-10));
      CHECK(c.a1 == doctest::Approx(fine.a1).epsilon(1e-10));
      CHECK(c.kappa == doctest::Approx(fine.kappa).epsilon(1e-10));
    }
  }
}

TEST_CASE("gradient-term weight decays with lambda") {
  PseudoFreqPartition p;
  for (int n = 1; n <= p.N; ++n) {
    auto lo = derive_layer_coefficients(p, 10.0, n), hi = derive_layer_coefficients(p, 100.0, n);
    CHECK(std::abs(hi.kappa / lo.kappa) <= 0.15);
    CHECK(!hi.drop_gradient_term);
  }
  // Large lambda concentrates the weight at s_{n-1}.
  auto c = derive_layer_coefficients(p, 1e4, 3);
  CHECK(c.a2 == doctest::Approx(2 * p.s(2)).epsilon(1e-3));
  CHECK(c.a1 == doctest::Approx(2 * p.s(2) * p.s(2)).epsilon(1e-3));
  CHECK(c.drop_gradient_term);
  CHECK_THROWS_WITH_AS(derive_layer_coefficients(p, 1.5, 1), doctest::Contains("lambda h"), Error);
}

TEST_CASE("tail_init") {
  Grid g = Grid::rect(0, 1, 21, 0, 1, 21);
  std::size_t edge = SubBox::whole(g).boundary_nodes(g).size();
  for (double v : tail_init(std::vector<double>(edge, 0.0), g, 8.0).v) CHECK(v == 0.0);

  // Data under the exact-tail model V = p / s with harmonic p: psi = -p / s^2.
  const double s = 8.0;
  ScalarField p(g);
  for (int j = 0; j < 21; ++j)
    for (int i = 0; i < 21; ++i) p(i, j) = g.x(i) * g.x(i) - g.y(j) * g.y(j) + 0.5 * g.x(i);
  std::vector<double> psi = boundary_values(p);
  for (double& v : psi) v = -v / (s * s);
  ScalarField tail = tail_init(psi, g, s);
  for (std::size_t k = 0; k < g.size(); ++k) CHECK(tail.v[k] == doctest::Approx(p.v[k] / s).epsilon(1e-9));

  // Linear response of grad V to a perturbation of psi, one fitted constant.
  Rng rng(3);
  auto response = [&](double delta) {
    std::vector<double> pert = psi;
    for (double& v : pert) v += delta * rng.uniform(-1, 1);
    ScalarField t2 = tail_init(pert, g, s);
    for (std::size_t k = 0; k < g.size(); ++k) t2.v[k] -= tail.v[k];
    double m = 0;
    for (const auto& c : gradient(t2)) m = std::max(m, max_abs(c));
    return m / (s * delta);
  };
  double fitted = 0;
  for (int k = 0; k < 5; ++k) fitted = std::max(fitted, response(1e-3));
  fitted *= 1.5;
  for (double delta : {1e-4, 1e-3, 1e-2}) CHECK(response(delta) <= fitted);
}

TEST_CASE("layer_solve: homogeneous problem and telescoping") {
  LayerState st;
  Grid g = Grid::line(0, 1, 51);
  st.tail = ScalarField(g);
  auto coef = derive_layer_coefficients(st.partition, 50.0, 1);
  ScalarField q = layer_solve(st, coef, {0.0, 0.0});
  for (double v : q.v) CHECK(v == 0.0);

  st.tail = ScalarField(g, 0.3);
  st.layers = {ScalarField(g, 1.0), ScalarField(g, 2.0)};
  ScalarField v0 = assemble_v(st, 0);
  CHECK(v0.v == st.tail.v);
  ScalarField extra(g, 4.0);
  ScalarField v3 = assemble_v(st, 3, &extra);
  CHECK(v3(10) == doctest::Approx(0.3 - st.partition.h() * 7.0));
}

TEST_CASE("layer_solve reproduces forward-pipeline layers") {
  Line l = line_setup(false);
  for (int i = 0; i < l.setup.grid.n[0]; ++i)
    l.truth.c(i) = 1.0 + 3.0 * std::exp(-std::pow((l.setup.grid.x(i) - 0.5) / 0.08, 2));
  l.truth.reset_edges();
  auto run = [&](int N) {
    PseudoFreqPartition p;
    p.N = N;
    auto s = pseudo_frequency_samples(p);
    const double ds = s[1] - s[0];
    std::vector<ScalarField> v;
    for (double sv : s) v.push_back(compute_v(restrict_to(elliptic_solve(l.truth, sv, l.setup.source), l.setup.omega), sv));
    auto index = [&](double sv) { return static_cast<int>(std::lround((sv - s[0]) / ds)); };
    auto exact_layer = [&](int n) {
      int a = index(p.s(n)), b = index(p.s(n - 1));
      ScalarField q(v[0].grid);
      for (int k = a; k <= b; ++k) {
        ScalarField qk = compute_q(v[k - 1], v[k + 1], ds);
        double w = (k == a || k == b) ? 0.5 : 1.0;
        for (std::size_t j = 0; j < q.size(); ++j) q.v[j] += w * qk.v[j] / (b - a);
      }
      return q;
    };
    LayerState st;
    st.partition = p;
    st.tail = v[index(p.s_max)];
    double worst = 0, worst_picard = 0;
    for (int n = 1; n <= 3; ++n) {
      ScalarField qs = exact_layer(n);
      double picard = 0;
      LayerSolveOptions opt;
      // Sweep 1 has no gradient term; the change is between the two
      // frozen-gradient sweeps that follow.
      opt.picard_sweeps = 3;
      opt.last_sweep_change = &picard;
      ScalarField q = layer_solve(st, derive_layer_coefficients(p, 50.0, n), boundary_values(qs), opt);
      worst = std::max(worst, rel_l2(q, qs));
      worst_picard = std::max(worst_picard, picard);
      st.layers.push_back(qs);
    }
    CHECK(worst_picard < 1e-3);
    return worst;
  };
  double coarse = run(14), fine = run(28);
  CHECK(coarse < 0.05);
  CHECK(coarse / fine > 1.7);
}

TEST_CASE("reconstruct_c") {
  Grid g = Grid::line(0, 1, 101);
  CoefficientModel zero = reconstruct_c(ScalarField(g), 4.0, 5.0);
  for (double v : zero.c.v) CHECK(v == 1.0);

  // Homogeneous medium: w = exp(-s|x - x0|) / 2s gives c = 1.
  const double s = 3.0;
  ScalarField v(g);
  for (int i = 0; i < 101; ++i) v(i) = (-s * (g.x(i) + 0.4) - std::log(2 * s)) / (s * s);
  for (double c : reconstruct_c(v, s, 5.0).c.v) CHECK(c == doctest::Approx(1.0).epsilon(1e-9));

  Line l = line_setup(true);
  ScalarField vi = compute_v(restrict_to(elliptic_solve(l.truth, 2.0, l.setup.source), l.setup.omega), 2.0);
  CoefficientModel a = reconstruct_c(vi, 2.0, 5.0), b = reconstruct_c(vi, 2.0, 5.0);
  CHECK(a.c.v == b.c.v);
  a.validate();
  std::size_t arg = 0;
  for (std::size_t k = 0; k < a.c.size(); ++k)
    if (a.c.v[k] > a.c.v[arg]) arg = k;
  double x = a.c.grid.x(static_cast<int>(arg));
  CHECK(x >= 0.4 - 1e-9);
  CHECK(x <= 0.6 + 1e-9);
}

TEST_CASE("closed loop: homogeneous background from wave data") {
  Line l = line_setup(false);
  Grid wide = Grid::line_spacing(-17.0, 18.0, 0.005);
  CoefficientModel cw = CoefficientModel::background(wide, 5.0);
  WaveOptions wo;
  wo.cfl = 0.9;
  auto wave = wave_forward(cw, MollifiedSource::on_grid(wide, {-0.4, 0.0}, 3.0), 30.0,
                           SubBox::from_coords(wide, 0.0, 1.0), wo);
  GlobconvConfig cfg;
  cfg.d = 5.0;
  GlobconvResult r = run_reconstruction(wave.trace, l.setup, cfg);
  ScalarField one(r.c.c.grid, 1.0);
  CHECK(rel_l2(r.c.c, one) <= 0.02);
  CHECK(r.stopped);
  CHECK(r.stop_n < cfg.N);

  GlobconvResult again = run_reconstruction(wave.trace, l.setup, cfg);
  REQUIRE(again.log.size() == r.log.size());
  for (std::size_t k = 0; k < r.log.size(); ++k) {
    CHECK(again.log[k].c_change == r.log[k].c_change);
    CHECK(again.log[k].boundary_residual == r.log[k].boundary_residual);
  }

  std::string path = "test_globconv_log.csv";
  write_globconv_log(r.log, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "n,i,c_change,boundary_residual,c_min,c_max");
  std::remove(path.c_str());
}

TEST_CASE("closed loop with the exact first tail localizes an inclusion") {
  Line l = line_setup(true);
  GlobconvConfig cfg;
  cfg.d = 5.0;
  BoundaryPseudoFreq data = elliptic_data(l, cfg.partition());
  ScalarField tail =
      compute_v(restrict_to(elliptic_solve(l.truth, cfg.s_max, l.setup.source), l.setup.omega), cfg.s_max);
  GlobconvResult r = run_reconstruction(data, l.setup, cfg, &tail);
  std::size_t arg = 0;
  for (std::size_t k = 0; k < r.c.c.size(); ++k)
    if (r.c.c.v[k] > r.c.c.v[arg]) arg = k;
  const double x = r.c.c.grid.x(static_cast<int>(arg));
  CHECK(x >= 0.4 - 1e-9);
  CHECK(x <= 0.6 + 1e-9);
  CHECK(r.log.front().c_max > 3.5);
}

TEST_CASE("two-dimensional loop on a homogeneous background") {
  GlobconvSetup su;
  su.grid = Grid::rect(-1.0, 2.0, 61, -1.0, 2.0, 61);
  su.omega = SubBox::from_coords(su.grid, 0.0, 1.0, 0.0, 1.0);
  su.source = MollifiedSource::on_grid(su.grid, {-0.5, 0.5}, 2.0);
  CoefficientModel truth = CoefficientModel::background(su.grid, 5.0);
  GlobconvConfig cfg;
  cfg.d = 5.0;
  cfg.N = 4;
  cfg.m = 2;
  auto s = pseudo_frequency_samples(cfg.partition());
  std::vector<std::vector<double>> phi;
  for (double sv : s) phi.push_back(boundary_values(restrict_to(elliptic_solve(truth, sv, su.source), su.omega)));
  BoundaryPseudoFreq data = pseudo_frequency_data(s, phi);
  GlobconvResult r = run_reconstruction(data, su, cfg);
  ScalarField one(r.c.c.grid, 1.0);
  CHECK(rel_l2(r.c.c, one) <= 0.02);
  r.c.validate();
}

TEST_CASE("tail magnitude ordering in s_max") {
  Line l = line_setup(true);
  double norm_v[3], norm_dv[3];
  double s_values[3] = {8.0, 12.0, 16.0};
  const double ds = 0.05;
  for (int k = 0; k < 3; ++k) {
    auto tail = [&](double s) { return compute_v(restrict_to(elliptic_solve(l.truth, s, l.setup.source), l.setup.omega), s); };
    ScalarField v = tail(s_values[k]);
    ScalarField dv = compute_q(tail(s_values[k] - ds), tail(s_values[k] + ds), ds);
    norm_v[k] = l2_norm(v);
    norm_dv[k] = l2_norm(dv);
  }
  for (int k = 1; k < 3; ++k) {
    CHECK(norm_v[k] < norm_v[k - 1]);
    CHECK(norm_dv[k] / norm_dv[k - 1] < norm_v[k] / norm_v[k - 1]);
  }
}

TEST_CASE("config validation") {
  GlobconvConfig cfg;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("bound d"), Error);
  cfg.d = 5.0;
  cfg.validate();
  cfg.lambda = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
