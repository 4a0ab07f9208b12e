#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bkinv/grid.hpp"
#include "bkinv/rng.hpp"
#include "bkinv/sparse.hpp"

using namespace bkinv;

namespace {

Csr laplacian_1d(int n, double h) {
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) {
    t.push_back({i, i, 2.0 / (h * h)});
    if (i > 0) t.push_back({i, i - 1, -1.0 / (h * h)});
    if (i < n - 1) t.push_back({i, i + 1, -1.0 / (h * h)});
  }
  return Csr::from_triplets(n, n, t);
}

Csr random_spd(int n, Rng& rng) {
  std::vector<Triplet> t;
  std::vector<double> rowsum(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (rng.uniform01() > 0.1) continue;
      double v = rng.uniform(-1.0, 1.0);
      t.push_back({i, j, v});
      t.push_back({j, i, v});
      rowsum[i] += std::abs(v);
      rowsum[j] += std::abs(v);
    }
  for (int i = 0; i < n; ++i) t.push_back({i, i, rowsum[i] + 1.0});
  return Csr::from_triplets(n, n, t);
}

double rel_residual(const Csr& a, const std::vector<double>& x, const std::vector<double>& b) {
  std::vector<double> ax;
  matvec(a, x, ax);
  for (std::size_t i = 0; i < ax.size(); ++i) ax[i] -= b[i];
  return norm2(ax) / norm2(b);
}

}  // namespace

TEST_CASE("triplets sum duplicates and keep sorted columns") {
  Csr m = Csr::from_triplets(2, 3, {{0, 2, 1.0}, {0, 0, 2.0}, {0, 2, 0.5}, {1, 1, -1.0}});
  CHECK(m.nnz() == 3);
  CHECK(m.at(0, 2) == 1.5);
  CHECK(m.at(0, 1) == 0.0);
  CHECK(m.col[0] == 0);
}

TEST_CASE("identity system returns the right-hand side") {
  Csr id = Csr::identity(5);
  std::vector<double> b{1, -2, 3, 0.5, 7}, x;
  for (Precond p : {Precond::None, Precond::Jacobi, Precond::Banded}) {
    SolveOptions o;
    o.precond = p;
    x.clear();
    sparse_solve(id, b, x, true, o);
    for (int i = 0; i < 5; ++i) CHECK(x[i] == doctest::Approx(b[i]));
  }
}

TEST_CASE("1D Laplacian with manufactured solution") {
  const int n = 199;
  const double h = 1.0 / (n + 1);
  Csr a = laplacian_1d(n, h);
  std::vector<double> u(n), b, x;
  for (int i = 0; i < n; ++i) u[i] = std::sin(3.0 * (i + 1) * h) + (i + 1) * h;
  matvec(a, u, b);
  SolveOptions o;
  o.precond = Precond::Jacobi;
  o.tol = 1e-12;
  auto rep = sparse_solve(a, b, x, true, o);
  CHECK(rep.converged);
  double err = 0.0, un = 0.0;
  for (int i = 0; i < n; ++i) {
    err = std::max(err, std::abs(x[i] - u[i]));
    un = std::max(un, std::abs(u[i]));
  }
  CHECK(err / un < 1e-8);
}

TEST_CASE("random SPD diagonally dominant 100x100 reaches 1e-10 residual") {
  Rng rng(11);
  Csr a = random_spd(100, rng);
  std::vector<double> b(100), x;
  for (double& v : b) v = rng.uniform(-1.0, 1.0);
  SolveOptions o;
  o.precond = Precond::None;
  auto rep = sparse_solve(a, b, x, true, o);
  CHECK(rep.residual <= 1e-10);
  CHECK(rel_residual(a, x, b) <= 1e-10);
}

TEST_CASE("bicgstab on a nonsymmetric convection-diffusion matrix") {
  const int n = 150;
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) {
    t.push_back({i, i, 4.0});
    if (i > 0) t.push_back({i, i - 1, -1.7});
    if (i < n - 1) t.push_back({i, i + 1, -0.3});
  }
  Csr a = Csr::from_triplets(n, n, t);
  std::vector<double> b(n, 1.0), x;
  SolveOptions o;
  o.precond = Precond::None;
  auto rep = sparse_solve(a, b, x, false, o);
  CHECK(rep.converged);
  CHECK(rel_residual(a, x, b) <= 1e-10);
}

TEST_CASE("non-convergence is reported with the final residual") {
  Csr a = laplacian_1d(400, 1.0);
  std::vector<double> b(400, 1.0), x;
  SolveOptions o;
  o.precond = Precond::None;
  o.max_iter = 3;
  CHECK_THROWS_WITH_AS(sparse_solve(a, b, x, true, o), doctest::Contains("residual"), Error);
  CHECK_THROWS_AS(sparse_solve(Csr::from_triplets(2, 3, {}), {1, 1}, x, true), Error);
}

TEST_CASE("banded LU solves exactly and LinearSolver reuses it") {
  Rng rng(5);
  const int n = 60;
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i)
    for (int d = -3; d <= 3; ++d) {
      int j = i + d;
      if (j < 0 || j >= n) continue;
      t.push_back({i, j, d == 0 ? 10.0 : rng.uniform(-1.0, 1.0)});
    }
  Csr a = Csr::from_triplets(n, n, t);
  CHECK(bandwidth(a) == 3);
  BandedLu lu(a);
  std::vector<double> u(n), b;
  for (double& v : u) v = rng.uniform(-1.0, 1.0);
  matvec(a, u, b);
  std::vector<double> x = b;
  lu.solve(x);
  for (int i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(u[i]).epsilon(1e-12));

  LinearSolver solver(a, false);
  CHECK(solver.direct());
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<double> y;
    auto r = solver.solve(b, y);
    CHECK(r.iterations <= 2);
    CHECK(rel_residual(a, y, b) <= 1e-10);
  }
}

TEST_CASE("matrix algebra helpers") {
  Csr a = Csr::from_triplets(2, 3, {{0, 0, 1.0}, {0, 2, 2.0}, {1, 1, 3.0}});
  Csr at = transpose(a);
  CHECK(at.rows == 3);
  CHECK(at.at(2, 0) == 2.0);
  Csr ata = multiply(at, a);
  CHECK(ata.at(0, 2) == 2.0);
  CHECK(ata.at(2, 2) == 4.0);
  Csr s = add(ata, 1.0, Csr::identity(3), 2.0);
  CHECK(s.at(1, 1) == 11.0);
  std::vector<int> map{0, -1, 1};
  Csr sub = principal_submatrix(ata, map, 2);
  CHECK(sub.at(0, 1) == 2.0);
  CHECK(sub.at(1, 1) == 4.0);
  Csr cols = select_columns(a, map, 2);
  CHECK(cols.at(0, 1) == 2.0);
  CHECK(banded_affordable(ata, 1e9));
}

TEST_CASE("threaded matvec matches the serial reference") {
  Rng rng(3);
  Csr a = random_spd(300, rng);
  std::vector<double> x(300), y1, y2;
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  matvec(a, x, y1);
  matvec_serial(a, x, y2);
  for (int i = 0; i < 300; ++i) CHECK(y1[i] == y2[i]);
}

TEST_CASE("recorded CG objective decreases monotonically") {
  Csr a = laplacian_1d(80, 0.1);
  std::vector<double> b(80), x;
  for (int i = 0; i < 80; ++i) b[i] = std::cos(0.3 * i);
  SolveOptions o;
  o.precond = Precond::None;
  o.record_objective = true;
  auto rep = cg(a, b, x, o);
  REQUIRE(rep.objective.size() > 2);
  for (std::size_t k = 1; k < rep.objective.size(); ++k) CHECK(rep.objective[k] <= rep.objective[k - 1] + 1e-12);
}
