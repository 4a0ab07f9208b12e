#include "bkinv/forward.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace bkinv {

CoefficientModel CoefficientModel::background(const Grid& g, double d) {
  CoefficientModel m;
  m.c = ScalarField(g, 1.0);
  m.d = d;
  return m;
}

namespace {

bool in_edge_layers(const Grid& g, int i, int j) {
  if (i <= 1 || i >= g.n[0] - 2) return true;
  if (g.dims == 2 && (j <= 1 || j >= g.n[1] - 2)) return true;
  return false;
}

}  // namespace

void CoefficientModel::validate() const {
  if (!(d > 2.0)) throw Error("coefficient: upper bound d must exceed 2");
  if (c.size() != c.grid.size()) throw Error("coefficient: field size mismatch");
  const Grid& g = c.grid;
  for (int j = 0; j < g.n[1]; ++j) {
    for (int i = 0; i < g.n[0]; ++i) {
      double v = c(i, j);
      if (!std::isfinite(v) || v < 1.0 - 1e-12 || v > d + 1e-12) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "coefficient: value %.6g at node (%d,%d) outside [1, %.6g]", v, i, j, d);
        throw Error(buf);
      }
      if (in_edge_layers(g, i, j) && std::abs(v - 1.0) > 1e-12)
        throw Error("coefficient: c must equal 1 on the two outer node layers");
    }
  }
}

void CoefficientModel::clamp() {
  for (double& v : c.v) v = std::clamp(v, 1.0, d);
}

void CoefficientModel::reset_edges() {
  const Grid& g = c.grid;
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i)
      if (in_edge_layers(g, i, j)) c(i, j) = 1.0;
}

MollifiedSource MollifiedSource::on_grid(const Grid& g, std::array<double, 2> x0, double width_in_cells) {
  MollifiedSource s;
  s.x0 = x0;
  s.eps = width_in_cells * std::max(g.h[0], g.dims == 2 ? g.h[1] : 0.0);
  return s;
}

ScalarField MollifiedSource::sample(const Grid& g) const {
  if (!(eps > 0.0)) throw Error("source: width must be positive");
  ScalarField f(g);
  for (int j = 0; j < g.n[1]; ++j) {
    for (int i = 0; i < g.n[0]; ++i) {
      double dx = g.x(i) - x0[0];
      double dy = g.dims == 2 ? g.y(j) - x0[1] : 0.0;
      f(i, j) = std::exp(-(dx * dx + dy * dy) / (eps * eps));
    }
  }
  double mass = integrate(f);
  if (!(mass > 0.0)) throw Error("source: Gaussian not resolved on the grid");
  for (double& v : f.v) v /= mass;
  return f;
}

std::vector<double> BoundaryTrace::series(std::size_t node) const {
  return std::vector<double>(values.begin() + node * samples, values.begin() + (node + 1) * samples);
}

BoundaryTrace make_trace(const Grid& g, const std::vector<std::size_t>& nodes, int samples, double dt) {
  BoundaryTrace t;
  t.nodes = nodes;
  t.samples = samples;
  t.dt = dt;
  t.values.assign(nodes.size() * samples, 0.0);
  for (std::size_t k : nodes) {
    int i = static_cast<int>(k % g.n[0]);
    int j = static_cast<int>(k / g.n[0]);
    t.coords.push_back({g.x(i), g.y(j)});
  }
  return t;
}

void leapfrog_step(const ScalarField& c, const ScalarField& u, const ScalarField& u_prev, double dt,
                   ScalarField& u_next) {
  const Grid& g = u.grid;
  const int nx = g.n[0], ny = g.n[1];
  const double ax = dt * dt / (g.h[0] * g.h[0]);
  const double ay = g.dims == 2 ? dt * dt / (g.h[1] * g.h[1]) : 0.0;
  const double* uv = u.v.data();
  const double* pv = u_prev.v.data();
  const double* cv = c.v.data();
  double* nv = u_next.v.data();
  if (g.dims == 1) {
    for (int i = 1; i < nx - 1; ++i)
      nv[i] = 2.0 * uv[i] - pv[i] + ax * (uv[i - 1] - 2.0 * uv[i] + uv[i + 1]) / cv[i];
    nv[0] = nv[nx - 1] = 0.0;
    return;
  }
#pragma omp parallel for schedule(static) if (g.size() > 20000)
  for (int j = 1; j < ny - 1; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * nx;
    for (int i = 1; i < nx - 1; ++i) {
      std::size_t k = row + i;
      double lap = ax * (uv[k - 1] - 2.0 * uv[k] + uv[k + 1]) + ay * (uv[k - nx] - 2.0 * uv[k] + uv[k + nx]);
      nv[k] = 2.0 * uv[k] - pv[k] + lap / cv[k];
    }
    nv[row] = nv[row + nx - 1] = 0.0;
  }
  for (int i = 0; i < nx; ++i) nv[i] = nv[static_cast<std::size_t>(ny - 1) * nx + i] = 0.0;
}

void leapfrog_step_serial(const ScalarField& c, const ScalarField& u, const ScalarField& u_prev, double dt,
                          ScalarField& u_next) {
  const Grid& g = u.grid;
  const double ax = dt * dt / (g.h[0] * g.h[0]);
  const double ay = g.dims == 2 ? dt * dt / (g.h[1] * g.h[1]) : 0.0;
  for (int j = 0; j < g.n[1]; ++j) {
    for (int i = 0; i < g.n[0]; ++i) {
      if (g.on_boundary(i, j)) {
        u_next(i, j) = 0.0;
        continue;
      }
      double lap = ax * (u(i - 1, j) - 2.0 * u(i, j) + u(i + 1, j));
      if (g.dims == 2) lap += ay * (u(i, j - 1) - 2.0 * u(i, j) + u(i, j + 1));
      u_next(i, j) = 2.0 * u(i, j) - u_prev(i, j) + lap / c(i, j);
    }
  }
}

double wave_time_step(const Grid& g, double T, double cfl) {
  if (!(cfl > 0.0) || cfl > 0.9) throw Error("wave: cfl must lie in (0, 0.9]");
  if (!(T > 0.0)) throw Error("wave: final time must be positive");
  double h = g.h[0];
  if (g.dims == 2) h = std::min(h, g.h[1]);
  double dt_max = cfl * h / std::sqrt(static_cast<double>(g.dims));
  int steps = static_cast<int>(std::ceil(T / dt_max - 1e-12));
  return T / steps;
}

WaveResult wave_evolve(const ScalarField& c, const ScalarField& u0, const ScalarField& ut0, double T,
                       const SubBox& omega, const WaveOptions& opt) {
  const Grid& g = c.grid;
  if (!g.same_shape(u0.grid) || !g.same_shape(ut0.grid)) throw Error("wave: field grids differ");
  WaveResult res;
  res.dt = wave_time_step(g, T, opt.cfl);
  res.steps = static_cast<int>(std::lround(T / res.dt));
  const double dt = res.dt;
  auto nodes = omega.boundary_nodes(g);
  res.trace = make_trace(g, nodes, res.steps + 1, dt);

  ScalarField prev = u0, cur(g), next(g);
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i)
      if (g.on_boundary(i, j)) prev(i, j) = 0.0;
  // Taylor start: u(dt) = u0 + dt ut0 + dt^2/2 u_tt + dt^3/6 u_ttt, u_tt = Lap u / c.
  ScalarField lap_u0 = laplacian(prev);
  ScalarField lap_ut0 = laplacian(ut0);
  for (int j = 0; j < g.n[1]; ++j) {
    for (int i = 0; i < g.n[0]; ++i) {
      if (g.on_boundary(i, j)) continue;
      double ci = c(i, j);
      cur(i, j) = prev(i, j) + dt * ut0(i, j) + 0.5 * dt * dt * lap_u0(i, j) / ci +
                  dt * dt * dt / 6.0 * lap_ut0(i, j) / ci;
    }
  }

  auto record = [&](int k, const ScalarField& u) {
    for (std::size_t b = 0; b < nodes.size(); ++b) res.trace.at(b, k) = u.v[nodes[b]];
    if (opt.snapshot_stride > 0 && k % opt.snapshot_stride == 0) {
      res.snapshots.push_back(u);
      res.snapshot_times.push_back(k * dt);
    }
  };
  record(0, prev);
  record(1, cur);
  for (int k = 2; k <= res.steps; ++k) {
    leapfrog_step(c, cur, prev, dt, next);
    std::swap(prev, cur);
    std::swap(cur, next);
    if (k % 64 == 0 || k == res.steps) {
      for (double v : cur.v)
        if (!std::isfinite(v)) throw Error("wave: instability, non-finite values at step " + std::to_string(k));
    }
    record(k, cur);
  }
  return res;
}

WaveResult wave_forward(const CoefficientModel& c, const MollifiedSource& src, double T, const SubBox& omega,
                        const WaveOptions& opt) {
  const Grid& g = c.c.grid;
  if (opt.check_padding) {
    // Earliest time a reflection off the outer boundary can reach the
    // measurement boundary, with unit speed as the upper bound.
    double ox0 = g.x(omega.first[0]), ox1 = g.x(omega.last[0]);
    double oy0 = g.y(omega.first[1]), oy1 = g.y(omega.last[1]);
    double earliest = 1e300;
    for (int j = 0; j < g.n[1]; ++j) {
      for (int i = 0; i < g.n[0]; ++i) {
        if (!g.on_boundary(i, j)) continue;
        double bx = g.x(i), by = g.y(j);
        double dx = bx - src.x0[0], dy = g.dims == 2 ? by - src.x0[1] : 0.0;
        double ex = std::max({ox0 - bx, 0.0, bx - ox1});
        double ey = g.dims == 2 ? std::max({oy0 - by, 0.0, by - oy1}) : 0.0;
        double t = std::hypot(dx, dy) - 3.0 * src.eps + std::hypot(ex, ey);
        earliest = std::min(earliest, t);
      }
    }
    if (earliest <= T) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "wave: padding too small, outer-boundary reflections reach the measurement boundary at t=%.4g <= T=%.4g",
                    earliest, T);
      throw Error(buf);
    }
  }
  ScalarField g_src = src.sample(g);
  return wave_evolve(c.c, ScalarField(g), g_src, T, omega, opt);
}

InteriorSystem interior_neg_laplacian(const Grid& g, const std::vector<double>& diag_shift) {
  InteriorSystem sys;
  sys.map.assign(g.size(), -1);
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i)
      if (!g.on_boundary(i, j)) {
        sys.map[g.index(i, j)] = static_cast<int>(sys.nodes.size());
        sys.nodes.push_back(g.index(i, j));
      }
  const double cx = 1.0 / (g.h[0] * g.h[0]);
  const double cy = g.dims == 2 ? 1.0 / (g.h[1] * g.h[1]) : 0.0;
  std::vector<Triplet> t;
  t.reserve(sys.nodes.size() * (g.dims == 2 ? 5 : 3));
  for (std::size_t r = 0; r < sys.nodes.size(); ++r) {
    std::size_t k = sys.nodes[r];
    int i = static_cast<int>(k % g.n[0]);
    int j = static_cast<int>(k / g.n[0]);
    double diag = 2.0 * cx + 2.0 * cy + (diag_shift.empty() ? 0.0 : diag_shift[k]);
    int row = static_cast<int>(r);
    t.push_back({row, row, diag});
    auto link = [&](int ii, int jj, double w) {
      int m = sys.map[g.index(ii, jj)];
      if (m >= 0) t.push_back({row, m, -w});
    };
    link(i - 1, j, cx);
    link(i + 1, j, cx);
    if (g.dims == 2) {
      link(i, j - 1, cy);
      link(i, j + 1, cy);
    }
  }
  int n = static_cast<int>(sys.nodes.size());
  sys.a = Csr::from_triplets(n, n, std::move(t));
  return sys;
}

namespace {

// Contribution of known boundary values to the interior rows of -Lap.
std::vector<double> boundary_lift(const Grid& g, const InteriorSystem& sys, const ScalarField& bnd) {
  const double cx = 1.0 / (g.h[0] * g.h[0]);
  const double cy = g.dims == 2 ? 1.0 / (g.h[1] * g.h[1]) : 0.0;
  std::vector<double> b(sys.nodes.size(), 0.0);
  for (std::size_t r = 0; r < sys.nodes.size(); ++r) {
    std::size_t k = sys.nodes[r];
    int i = static_cast<int>(k % g.n[0]);
    int j = static_cast<int>(k / g.n[0]);
    auto add = [&](int ii, int jj, double w) {
      if (g.on_boundary(ii, jj)) b[r] += w * bnd(ii, jj);
    };
    add(i - 1, j, cx);
    add(i + 1, j, cx);
    if (g.dims == 2) {
      add(i, j - 1, cy);
      add(i, j + 1, cy);
    }
  }
  return b;
}

void check_positive(const ScalarField& w, double s) {
  const Grid& g = w.grid;
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i) {
      if (g.dims == 2 && g.on_boundary(i, j)) continue;
      if (!(w(i, j) > 0.0)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "elliptic: positivity violated at node (%d,%d) for s=%.6g (grid too coarse)",
                      i, j, s);
        throw Error(buf);
      }
    }
}

}  // namespace

ScalarField elliptic_solve_rhs(const CoefficientModel& c, double s, const ScalarField& rhs,
                               const EllipticOptions& opt) {
  if (!(s > 0.0)) throw Error("elliptic: s must be positive");
  const Grid& g = c.c.grid;
  if (!g.same_shape(rhs.grid)) throw Error("elliptic: right-hand side grid differs");
  SolveOptions so;
  so.tol = opt.tol;
  so.precond = opt.precond;
  ScalarField w(g);
  if (g.dims == 1) {
    // Exact discrete decay beyond each end for the unit background:
    // w[-1] = r w[0] with r the root below 1 of r^2 - 2a r + 1 = 0.
    const int n = g.n[0];
    const double h = g.h[0];
    const double a = 1.0 + 0.5 * s * s * h * h;
    const double r = a - std::sqrt(a * a - 1.0);
    const double inv = 1.0 / (h * h);
    std::vector<Triplet> t;
    for (int i = 0; i < n; ++i) {
      double diag = 2.0 * inv + s * s * c.c(i);
      if (i == 0 || i == n - 1) diag -= r * inv;
      t.push_back({i, i, diag});
      if (i > 0) t.push_back({i, i - 1, -inv});
      if (i < n - 1) t.push_back({i, i + 1, -inv});
    }
    Csr m = Csr::from_triplets(n, n, std::move(t));
    std::vector<double> b(rhs.v);
    for (double& v : b) v *= opt.source_scale;
    std::vector<double> x;
    sparse_solve(m, b, x, true, so);
    w.v = std::move(x);
  } else {
    std::vector<double> shift(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) shift[k] = s * s * c.c.v[k];
    InteriorSystem sys = interior_neg_laplacian(g, shift);
    std::vector<double> b(sys.nodes.size());
    for (std::size_t r = 0; r < sys.nodes.size(); ++r) b[r] = opt.source_scale * rhs.v[sys.nodes[r]];
    std::vector<double> x;
    sparse_solve(sys.a, b, x, true, so);
    for (std::size_t r = 0; r < sys.nodes.size(); ++r) w.v[sys.nodes[r]] = x[r];
  }
  if (opt.check_positivity) check_positive(w, s);
  return w;
}

ScalarField elliptic_solve(const CoefficientModel& c, double s, const MollifiedSource& src,
                           const EllipticOptions& opt) {
  return elliptic_solve_rhs(c, s, src.sample(c.c.grid), opt);
}

ScalarField harmonic_solve(const ScalarField& boundary) {
  const Grid& g = boundary.grid;
  for (double v : boundary.v)
    if (!std::isfinite(v)) throw Error("harmonic: non-finite boundary values");
  ScalarField p(g);
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i)
      if (g.on_boundary(i, j)) p(i, j) = boundary(i, j);
  InteriorSystem sys = interior_neg_laplacian(g, {});
  std::vector<double> b = boundary_lift(g, sys, boundary);
  std::vector<double> x;
  SolveOptions so;
  so.tol = 1e-13;
  sparse_solve(sys.a, b, x, true, so);
  for (std::size_t r = 0; r < sys.nodes.size(); ++r) p.v[sys.nodes[r]] = x[r];
  return p;
}

double outward_derivative(const ScalarField& f, const SubBox& box, std::size_t node) {
  const Grid& g = f.grid;
  int i = static_cast<int>(node % g.n[0]);
  int j = static_cast<int>(node / g.n[0]);
  int di = 0, dj = 0;  // inward step
  if (g.dims == 1) {
    if (i == box.first[0]) di = 1;
    else if (i == box.last[0]) di = -1;
    else throw Error("outward_derivative: node not on the box boundary");
  } else if (j == box.first[1] && i < box.last[0] && i >= box.first[0]) {
    dj = 1;
  } else if (i == box.last[0] && j < box.last[1] && j >= box.first[1]) {
    di = -1;
  } else if (j == box.last[1] && i > box.first[0] && i <= box.last[0]) {
    dj = -1;
  } else if (i == box.first[0] && j > box.first[1] && j <= box.last[1]) {
    di = 1;
  } else {
    throw Error("outward_derivative: node not on the box boundary");
  }
  double h = di != 0 ? g.h[0] : g.h[1];
  return (3.0 * f(i, j) - 4.0 * f(i + di, j + dj) + f(i + 2 * di, j + 2 * dj)) / (2.0 * h);
}

HeatResult heat_forward(const ScalarField& c, const ScalarField& f0, double T, double dt, const SubBox& omega,
                        int snapshot_stride) {
  const Grid& g = c.grid;
  if (!g.same_shape(f0.grid)) throw Error("heat: initial field grid differs");
  if (!(T > 0.0) || !(dt > 0.0)) throw Error("heat: T and dt must be positive");
  HeatResult res;
  res.steps = static_cast<int>(std::lround(T / dt));
  if (res.steps < 1) res.steps = 1;
  res.dt = T / res.steps;
  std::vector<double> shift(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) shift[k] = c.v[k] / res.dt;
  InteriorSystem sys = interior_neg_laplacian(g, shift);
  SolveOptions so;
  so.tol = 1e-13;
  LinearSolver solver(sys.a, true, so);

  auto nodes = omega.boundary_nodes(g);
  res.dirichlet = make_trace(g, nodes, res.steps + 1, res.dt);
  res.neumann = make_trace(g, nodes, res.steps + 1, res.dt);
  ScalarField v = f0;
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i)
      if (g.on_boundary(i, j)) v(i, j) = 0.0;
  auto record = [&](int k) {
    for (std::size_t b = 0; b < nodes.size(); ++b) {
      res.dirichlet.at(b, k) = v.v[nodes[b]];
      res.neumann.at(b, k) = outward_derivative(v, omega, nodes[b]);
    }
    if (snapshot_stride > 0 && k % snapshot_stride == 0) {
      res.snapshots.push_back(v);
      res.snapshot_times.push_back(k * res.dt);
    }
  };
  record(0);
  std::vector<double> b(sys.nodes.size()), x(sys.nodes.size());
  for (int k = 1; k <= res.steps; ++k) {
    for (std::size_t r = 0; r < sys.nodes.size(); ++r) {
      b[r] = shift[sys.nodes[r]] * v.v[sys.nodes[r]];
      x[r] = v.v[sys.nodes[r]];
    }
    solver.solve(b, x);
    for (std::size_t r = 0; r < sys.nodes.size(); ++r) v.v[sys.nodes[r]] = x[r];
    record(k);
  }
  return res;
}

}  // namespace bkinv
