#include "bkinv/qrm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace bkinv {

namespace {

int face_length(const Grid& g, Face f) { return f == Face::YLo ? g.n[0] : g.n[1]; }

double face_step(const Grid& g, Face f) { return f == Face::YLo ? g.h[1] : g.h[0]; }

// Node at position k along the face, `layer` cells inward.
std::size_t face_node(const Grid& g, Face f, int k, int layer) {
  switch (f) {
    case Face::XLo: return g.index(layer, k);
    case Face::XHi: return g.index(g.n[0] - 1 - layer, k);
    case Face::YLo: return g.index(k, layer);
  }
  return 0;
}

// Distance in cells from node (i, j) to the face.
int face_distance(const Grid& g, Face f, int i, int j) {
  switch (f) {
    case Face::XLo: return i;
    case Face::XHi: return g.n[0] - 1 - i;
    case Face::YLo: return j;
  }
  return 0;
}

const char* face_name(Face f) {
  switch (f) {
    case Face::XLo: return "x_lo";
    case Face::XHi: return "x_hi";
    case Face::YLo: return "y_lo";
  }
  return "?";
}

double value_or(const ScalarField& f, std::size_t k, double fallback) { return f.v.empty() ? fallback : f.v[k]; }

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// k-th forward difference, (n - k) x n.
Csr forward_difference(int n, double h, int k) {
  std::vector<Triplet> t;
  const double scale = std::pow(h, -k);
  for (int r = 0; r + k < n; ++r)
    for (int m = 0; m <= k; ++m) t.push_back({r, r + m, ((k - m) % 2 ? -1.0 : 1.0) * binomial(k, m) * scale});
  return Csr::from_triplets(std::max(n - k, 0), n, std::move(t));
}

// kron(B, A) for row-major node index j * nA + i.
Csr kron(const Csr& b, const Csr& a) {
  std::vector<Triplet> t;
  for (int rb = 0; rb < b.rows; ++rb)
    for (int pb = b.rowptr[rb]; pb < b.rowptr[rb + 1]; ++pb)
      for (int ra = 0; ra < a.rows; ++ra)
        for (int pa = a.rowptr[ra]; pa < a.rowptr[ra + 1]; ++pa)
          t.push_back({rb * a.rows + ra, b.col[pb] * a.cols + a.col[pa], b.val[pb] * a.val[pa]});
  return Csr::from_triplets(a.rows * b.rows, a.cols * b.cols, std::move(t));
}

std::vector<double> interior_source(const QrmProblem& p) {
  const Grid& g = p.grid;
  std::vector<double> f;
  f.reserve(static_cast<std::size_t>(g.n[0] - 2) * (g.n[1] - 2));
  for (int j = 1; j < g.n[1] - 1; ++j)
    for (int i = 1; i < g.n[0] - 1; ++i) f.push_back(value_or(p.source, g.index(i, j), 0.0));
  return f;
}

double max_abs_data(const CauchyData& data) {
  double m = 0.0;
  for (const auto& fd : data) {
    for (double v : fd.p) m = std::max(m, std::abs(v));
    for (double v : fd.q) m = std::max(m, std::abs(v));
  }
  return m;
}

}  // namespace

void QrmProblem::validate() const {
  if (grid.dims != 2) throw Error("qrm: problem grid must be two-dimensional");
  if (grid.n[0] < 5 || grid.n[1] < 5) throw Error("qrm: grid needs at least 5 nodes per axis");
  if (!(gamma > 0.0)) throw Error("qrm: gamma must be positive");
  if (penalty_order < 1 || penalty_order > 4) throw Error("qrm: penalty order must be 1..4");
  for (const ScalarField* f : {&c, &b0, &source})
    if (!f->v.empty() && !f->grid.same_shape(grid)) throw Error("qrm: coefficient grid differs from problem grid");
  for (const auto& fd : data) {
    if (fd.face == Face::YLo && op != QrmOperator::Elliptic)
      throw Error("qrm: time-dependent problems take lateral data only");
    const auto n = static_cast<std::size_t>(face_length(grid, fd.face));
    if (fd.p.size() != n || fd.q.size() != n)
      throw Error(std::string("qrm: data length mismatch on face ") + face_name(fd.face));
    for (double v : fd.p)
      if (!std::isfinite(v)) throw Error("qrm: non-finite Dirichlet data");
    for (double v : fd.q)
      if (!std::isfinite(v)) throw Error("qrm: non-finite Neumann data");
  }
}

Csr qrm_operator_matrix(const QrmProblem& p) {
  const Grid& g = p.grid;
  const int nx = g.n[0], ny = g.n[1];
  const double hx2 = 1.0 / (g.h[0] * g.h[0]), hy = g.h[1], hy2 = 1.0 / (hy * hy);
  std::vector<Triplet> t;
  int row = 0;
  for (int j = 1; j < ny - 1; ++j)
    for (int i = 1; i < nx - 1; ++i, ++row) {
      const std::size_t k = g.index(i, j);
      const double c = value_or(p.c, k, 1.0), b0 = value_or(p.b0, k, 0.0);
      const int n = static_cast<int>(k), e = static_cast<int>(g.index(i + 1, j)), w = static_cast<int>(g.index(i - 1, j));
      const int up = static_cast<int>(g.index(i, j + 1)), dn = static_cast<int>(g.index(i, j - 1));
      switch (p.op) {
        case QrmOperator::Elliptic:
          t.push_back({row, n, -2.0 * hx2 - 2.0 * hy2 + b0});
          t.push_back({row, e, hx2});
          t.push_back({row, w, hx2});
          t.push_back({row, up, hy2});
          t.push_back({row, dn, hy2});
          break;
        case QrmOperator::Parabolic:
          t.push_back({row, n, 2.0 * hx2 - b0});
          t.push_back({row, e, -hx2});
          t.push_back({row, w, -hx2});
          t.push_back({row, up, c / (2.0 * hy)});
          t.push_back({row, dn, -c / (2.0 * hy)});
          break;
        case QrmOperator::Hyperbolic:
          t.push_back({row, n, 2.0 * hx2 - 2.0 * c * hy2 - b0});
          t.push_back({row, e, -hx2});
          t.push_back({row, w, -hx2});
          t.push_back({row, up, c * hy2});
          t.push_back({row, dn, c * hy2});
          break;
      }
    }
  return Csr::from_triplets(row, static_cast<int>(g.size()), std::move(t));
}

Csr qrm_penalty_matrix(const Grid& g, int order) {
  const int nx = g.n[0], ny = g.n[1];
  Csr r(Csr::from_triplets(static_cast<int>(g.size()), static_cast<int>(g.size()), {}));
  for (int m = 0; m <= order; ++m)
    for (int a = 0; a <= m; ++a) {
      Csr d = kron(forward_difference(ny, g.h[1], m - a), forward_difference(nx, g.h[0], a));
      r = add(r, 1.0, multiply(transpose(d), d), binomial(m, a));
    }
  return scaled(r, g.h[0] * g.h[1]);
}

std::vector<char> qrm_constrained_nodes(const QrmProblem& p) {
  std::vector<char> fixed(p.grid.size(), 0);
  for (const auto& fd : p.data)
    for (int k = 0; k < face_length(p.grid, fd.face); ++k)
      for (int layer = 0; layer < 2; ++layer) fixed[face_node(p.grid, fd.face, k, layer)] = 1;
  return fixed;
}

Homogenized homogenize(const QrmProblem& problem, double cutoff_width) {
  problem.validate();
  const Grid& g = problem.grid;
  Homogenized out{problem, ScalarField(g)};
  if (problem.data.empty()) return out;
  ScalarField& F = out.shift;

  // Harmonic-in-space part matching p on every data face.
  if (problem.op == QrmOperator::Elliptic) {
    ScalarField boundary(g);
    for (const auto& fd : problem.data)
      for (int k = 0; k < face_length(g, fd.face); ++k) boundary.v[face_node(g, fd.face, k, 0)] = fd.p[k];
    F = harmonic_solve(boundary);
  } else {
    const FaceData* lo = nullptr;
    const FaceData* hi = nullptr;
    for (const auto& fd : problem.data) (fd.face == Face::XLo ? lo : hi) = &fd;
    const double width = g.hi[0] - g.lo[0];
    for (int j = 0; j < g.n[1]; ++j)
      for (int i = 0; i < g.n[0]; ++i) {
        double a = lo ? lo->p[j] : hi->p[j];
        double b = hi ? hi->p[j] : lo->p[j];
        double z = (g.x(i) - g.lo[0]) / width;
        F(i, j) = (1.0 - z) * a + z * b;
      }
  }

  // Normal correction: slope fixing the first interior layer to p - h q.
  const double L0 = cutoff_width;
  for (const auto& fd : problem.data) {
    const double h = face_step(g, fd.face);
    const double L = std::max(L0, 3.0 * h);
    std::vector<double> slope(fd.p.size());
    for (std::size_t k = 0; k < slope.size(); ++k)
      slope[k] = (fd.p[k] - h * fd.q[k] - F.v[face_node(g, fd.face, static_cast<int>(k), 1)]) / h;
    for (int j = 0; j < g.n[1]; ++j)
      for (int i = 0; i < g.n[0]; ++i) {
        double d = face_distance(g, fd.face, i, j) * h;
        if (d >= L) continue;
        double z = std::max(0.0, d - h) / (L - h);
        double chi = 1.0 - 3.0 * z * z + 2.0 * z * z * z;
        int k = fd.face == Face::YLo ? i : j;
        F(i, j) += chi * d * slope[k];
      }
  }

  // The corrections of different faces must not reach each other's layers.
  double scale = std::max(1.0, max_abs_data(problem.data));
  for (const auto& fd : problem.data) {
    const double h = face_step(g, fd.face);
    for (int k = 0; k < face_length(g, fd.face); ++k) {
      double e0 = std::abs(F.v[face_node(g, fd.face, k, 0)] - fd.p[k]);
      double e1 = std::abs(F.v[face_node(g, fd.face, k, 1)] - (fd.p[k] - h * fd.q[k]));
      if (std::max(e0, e1) > 1e-9 * scale)
        throw Error("homogenize: data faces too close for the cutoff width; reduce cutoff_width");
    }
  }

  Csr A = qrm_operator_matrix(problem);
  std::vector<double> af(A.rows);
  matvec(A, F.v, af);
  auto f = interior_source(problem);
  ScalarField G(g);
  int row = 0;
  for (int j = 1; j < g.n[1] - 1; ++j)
    for (int i = 1; i < g.n[0] - 1; ++i, ++row) G(i, j) = f[row] - af[row];
  out.problem.source = G;
  for (auto& fd : out.problem.data) {
    std::fill(fd.p.begin(), fd.p.end(), 0.0);
    std::fill(fd.q.begin(), fd.q.end(), 0.0);
  }
  return out;
}

QrmSolution qrm_solve(const QrmProblem& problem, const QrmSolveOptions& opt) {
  problem.validate();
  if (max_abs_data(problem.data) != 0.0) throw Error("qrm_solve: Cauchy data must be homogeneous; call homogenize first");
  const Grid& g = problem.grid;
  const double vol = g.h[0] * g.h[1];
  Csr A = qrm_operator_matrix(problem);
  Csr At = transpose(A);
  Csr R = qrm_penalty_matrix(g, problem.penalty_order);
  Csr M = add(scaled(multiply(At, A), vol), 1.0, R, problem.gamma);

  auto fixed = qrm_constrained_nodes(problem);
  std::vector<int> map(g.size(), -1);
  int n_free = 0;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (!fixed[k]) map[k] = n_free++;
  Csr Mf = principal_submatrix(M, map, n_free);

  auto f = interior_source(problem);
  std::vector<double> atf(g.size());
  matvec(At, f, atf);
  std::vector<double> b(n_free);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (map[k] >= 0) b[map[k]] = vol * atf[k];

  SolveOptions so;
  so.tol = opt.tol;
  so.precond = opt.precond;
  so.record_objective = opt.record_objective;
  LinearSolver solver(Mf, true, so);
  std::vector<double> x = opt.initial;
  if (!x.empty() && static_cast<int>(x.size()) != n_free) throw Error("qrm_solve: initial vector has the wrong size");
  SolveReport rep = solver.solve(b, x);

  QrmSolution sol;
  sol.u = ScalarField(g);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (map[k] >= 0) sol.u.v[k] = x[map[k]];
  std::vector<double> au(A.rows), ru(g.size()), mx(n_free);
  matvec(A, sol.u.v, au);
  double res2 = 0.0;
  for (int r = 0; r < A.rows; ++r) res2 += (au[r] - f[r]) * (au[r] - f[r]);
  res2 *= vol;
  matvec(R, sol.u.v, ru);
  double pen2 = dot(sol.u.v, ru);
  sol.residual = std::sqrt(res2);
  sol.penalty_norm = std::sqrt(std::max(pen2, 0.0));
  sol.objective = res2 + problem.gamma * pen2;
  matvec(Mf, x, mx);
  for (int k = 0; k < n_free; ++k) mx[k] -= b[k];
  double bn = norm2(b);
  sol.gradient_norm = bn > 0.0 ? norm2(mx) / bn : norm2(mx);
  sol.iterations = rep.iterations;
  sol.objective_history = rep.objective;
  return sol;
}

QrmSolution qrm_reconstruct(const QrmProblem& problem, const QrmSolveOptions& opt) {
  Homogenized h = homogenize(problem);
  QrmSolution s = qrm_solve(h.problem, opt);
  for (std::size_t k = 0; k < s.u.size(); ++k) s.u.v[k] += h.shift.v[k];
  return s;
}

double h1_norm(const ScalarField& u, const std::vector<char>& mask) {
  const Grid& g = u.grid;
  auto in = [&](int i, int j) { return mask.empty() || mask[g.index(i, j)]; };
  double s = 0.0;
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i) {
      if (!in(i, j)) continue;
      s += u(i, j) * u(i, j);
      if (i + 1 < g.n[0] && in(i + 1, j)) s += std::pow((u(i + 1, j) - u(i, j)) / g.h[0], 2);
      if (g.dims == 2 && j + 1 < g.n[1] && in(i, j + 1)) s += std::pow((u(i, j + 1) - u(i, j)) / g.h[1], 2);
    }
  return std::sqrt(s * g.cell_volume());
}

CauchyData cauchy_data_from_field(const ScalarField& u, const std::vector<Face>& faces) {
  CauchyData data;
  for (Face f : faces) {
    FaceData fd;
    fd.face = f;
    const double h = face_step(u.grid, f);
    for (int k = 0; k < face_length(u.grid, f); ++k) {
      double p = u.v[face_node(u.grid, f, k, 0)];
      fd.p.push_back(p);
      fd.q.push_back((p - u.v[face_node(u.grid, f, k, 1)]) / h);
    }
    data.push_back(std::move(fd));
  }
  return data;
}

double loglog_slope(const std::vector<double>& delta, const std::vector<double>& err) {
  const std::size_t n = std::min(delta.size(), err.size());
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += std::log(delta[k]);
    my += std::log(err[k]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < n; ++k) {
    double dx = std::log(delta[k]) - mx;
    sxy += dx * (std::log(err[k]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

RateResult rate_experiment(const RateSetup& setup, const std::vector<double>& deltas, std::uint64_t seed) {
  if (deltas.size() < 3) throw Error("rate_experiment: need at least 3 noise levels");
  for (double d : deltas)
    if (!(d > 0.0)) throw Error("rate_experiment: noise levels must be positive");
  const auto& exact = setup.exact;
  const double ref_region = h1_norm(exact, setup.region), ref_full = h1_norm(exact);
  auto errors = [&](const ScalarField& u, double& region, double& full) {
    ScalarField e(u.grid);
    for (std::size_t k = 0; k < e.size(); ++k) e.v[k] = u.v[k] - exact.v[k];
    region = h1_norm(e, setup.region) / ref_region;
    full = h1_norm(e) / ref_full;
  };

  RateResult res;
  res.rows.resize(deltas.size());
  const Rng root(seed);
  const int levels = static_cast<int>(deltas.size());
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < levels; ++k) {
    RateRow& row = res.rows[k];
    row.delta = deltas[k];
    row.gamma = setup.gamma_factor * deltas[k] * deltas[k];
    Rng rng = root.child(static_cast<std::uint64_t>(k));
    for (int rep = 0; rep < setup.repeats; ++rep) {
      QrmProblem p = setup.problem;
      p.gamma = row.gamma;
      for (auto& fd : p.data) {
        apply_noise(fd.p, deltas[k], setup.noise, rng);
        apply_noise(fd.q, deltas[k], setup.noise, rng);
      }
      double region = 0, full = 0;
      errors(qrm_reconstruct(p).u, region, full);
      row.error_region += region / setup.repeats;
      row.error_full += full / setup.repeats;
    }
  }
  std::vector<double> d, e;
  for (auto& row : res.rows) {
    d.push_back(row.delta);
    e.push_back(row.error_region);
    row.slope_running = loglog_slope(d, e);
  }
  res.slope = res.rows.back().slope_running;
  QrmProblem p = setup.problem;
  p.gamma = setup.gamma_factor * std::pow(*std::min_element(deltas.begin(), deltas.end()), 2);
  double full = 0;
  errors(qrm_reconstruct(p).u, res.noiseless_error, full);
  return res;
}

void write_rate_csv(const RateResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "delta,gamma,error_region,error_full,slope_running\n";
  char buf[256];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.10e,%.10e,%.10e,%.10e,%.10e\n", row.delta, row.gamma, row.error_region,
                  row.error_full, row.slope_running);
    out << buf;
  }
}

std::vector<double> resample(const std::vector<double>& v, double dt, double new_dt, int count) {
  if (v.empty() || !(dt > 0.0) || !(new_dt > 0.0)) throw Error("resample: empty series or non-positive step");
  const double t_end = dt * static_cast<double>(v.size() - 1);
  std::vector<double> out(count);
  for (int k = 0; k < count; ++k) {
    double t = k * new_dt;
    if (t > t_end * (1.0 + 1e-12) + 1e-14) throw Error("resample: requested time beyond the series");
    double pos = std::min(t / dt, static_cast<double>(v.size() - 1));
    auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= v.size()) {
      out[k] = v.back();
      continue;
    }
    double w = pos - static_cast<double>(i);
    out[k] = (1.0 - w) * v[i] + w * v[i + 1];
  }
  return out;
}

ScalarField tat_qrm(const TatData& data, const TatOptions& opt) {
  const std::size_t n = data.p_lo.size();
  if (n < 2 || data.p_hi.size() != n || data.q_lo.size() != n || data.q_hi.size() != n)
    throw Error("tat_qrm: traces must be non-empty and of equal length");
  if (!(data.x_hi > data.x_lo) || !(data.dt > 0.0)) throw Error("tat_qrm: bad geometry or time step");
  const double radius = 0.5 * (data.x_hi - data.x_lo);
  if (!(data.T() > radius)) throw Error("tat_qrm: observation time T must exceed the domain radius");
  const int nx = opt.nodes;
  const double dx = (data.x_hi - data.x_lo) / (nx - 1);
  const int m = static_cast<int>(std::floor(data.T() / dx + 1e-9));
  const int nt = 2 * m + 1;

  QrmProblem p;
  p.op = QrmOperator::Hyperbolic;
  p.grid = Grid::rect(data.x_lo, data.x_hi, nx, -m * dx, m * dx, nt);
  p.gamma = opt.gamma;
  p.penalty_order = opt.penalty_order;
  if (opt.c) {
    p.c = ScalarField(p.grid);
    for (int j = 0; j < nt; ++j)
      for (int i = 0; i < nx; ++i) p.c(i, j) = opt.c(p.grid.x(i));
  }
  auto even = [&](const std::vector<double>& v) {
    auto half = resample(v, data.dt, dx, m + 1);
    std::vector<double> full(nt);
    for (int j = 0; j < nt; ++j) full[j] = half[std::abs(j - m)];
    return full;
  };
  p.data = {FaceData{Face::XLo, even(data.p_lo), even(data.q_lo)},
            FaceData{Face::XHi, even(data.p_hi), even(data.q_hi)}};
  QrmSolution s = qrm_reconstruct(p);
  ScalarField f(Grid::line(data.x_lo, data.x_hi, nx));
  for (int i = 0; i < nx; ++i) f(i) = s.u(i, m);
  return f;
}

}  // namespace bkinv
