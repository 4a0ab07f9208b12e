#include "bkinv/inverse_source.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bkinv/log.hpp"
#include "bkinv/transforms.hpp"

namespace bkinv {

void TatProblem::validate() const {
  if (grid.dims != 1) throw Error("tat: the measurement domain must be one-dimensional");
  if (p.nodes.size() != 2 || p.samples < 2 || !(p.dt > 0.0)) throw Error("tat: need a two-end trace with a positive step");
  if (!c.v.empty()) {
    if (!c.grid.same_shape(grid)) throw Error("tat: coefficient grid differs from the domain grid");
    if (c.v.front() != 1.0 || c.v.back() != 1.0) throw Error("tat: c must equal 1 at the domain ends");
  }
  double radius = 0.5 * (grid.hi[0] - grid.lo[0]);
  if (!(T() > radius)) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "tat: observation time T=%.4g must exceed the domain radius %.4g", T(), radius);
    throw Error(buf);
  }
}

TatSynthetic tat_forward(const ScalarField& f, const ScalarField& c, double T, double cfl) {
  const Grid& g = f.grid;
  if (g.dims != 1) throw Error("tat_forward: one space dimension only");
  const double h = g.h[0];
  const int pad = static_cast<int>(std::ceil((0.5 * T) / h)) + 20;
  const int n = g.n[0];
  Grid big = Grid::line(g.lo[0] - pad * h, g.hi[0] + pad * h, n + 2 * pad);
  ScalarField cb(big, 1.0), u0(big), ut0(big);
  for (int i = 0; i < n; ++i) {
    u0(pad + i) = f(i);
    if (!c.v.empty()) cb(pad + i) = c(i);
  }
  SubBox omega;
  omega.first = {pad, 0};
  omega.last = {pad + n - 1, 0};
  WaveOptions opt;
  opt.cfl = cfl;
  opt.snapshot_stride = 1;
  WaveResult res = wave_evolve(cb, u0, ut0, T, omega, opt);

  TatSynthetic out;
  out.problem.grid = g;
  out.problem.c = c;
  out.problem.p = res.trace;
  out.problem.p.nodes = {0, static_cast<std::size_t>(n - 1)};
  out.neumann = out.problem.p;
  for (int k = 0; k < res.trace.samples; ++k) {
    const ScalarField& u = res.snapshots[k];
    out.neumann.at(0, k) = (u(pad - 1) - u(pad + 1)) / (2.0 * h);
    out.neumann.at(1, k) = (u(pad + n) - u(pad + n - 2)) / (2.0 * h);
  }
  return out;
}

BoundaryTrace exterior_neumann_recovery(const BoundaryTrace& p, const ExteriorOptions& opt) {
  if (p.nodes.size() != 2) throw Error("exterior recovery: expects the two ends of a 1D domain");
  if (p.samples < 3 || !(p.dt > 0.0)) throw Error("exterior recovery: trace too short");
  const double h = p.dt;  // unit speed, Courant number one
  const double T = p.dt * (p.samples - 1);
  const double padding = opt.padding > 0.0 ? opt.padding : 0.6 * T + 10.0 * h;
  const int cells = std::max(4, static_cast<int>(std::ceil(padding / h)));
  BoundaryTrace q = p;
  for (std::size_t end = 0; end < 2; ++end) {
    std::vector<double> prev(cells + 1, 0.0), cur(cells + 1, 0.0), next(cells + 1, 0.0);
    double gmax = 0.0;
    for (int k = 0; k < p.samples; ++k) gmax = std::max(gmax, std::abs(p.at(end, k)));
    // Signal reaching the far end before T - padding returns to the data
    // boundary before T.
    const int monitor_until = static_cast<int>(std::floor((T - cells * h) / p.dt));
    double leak = 0.0;
    cur[0] = p.at(end, 0);
    auto derivative = [&](const std::vector<double>& u) { return (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h); };
    q.at(end, 0) = derivative(cur);
    for (int k = 1; k < p.samples; ++k) {
      next[0] = p.at(end, k);
      for (int i = 1; i < cells; ++i) next[i] = cur[i + 1] + cur[i - 1] - prev[i];
      next[cells] = 0.0;
      std::swap(prev, cur);
      std::swap(cur, next);
      if (k <= monitor_until) leak = std::max(leak, std::abs(cur[cells - 1]));
      q.at(end, k) = derivative(cur);
    }
    if (leak > 1e-12 * gmax && leak > 0.0) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "exterior recovery: padding %.4g insufficient, far-end reflection reaches the boundary before T=%.4g",
                    cells * h, T);
      throw Error(buf);
    }
  }
  return q;
}

ScalarField tat_reconstruct(const TatProblem& problem, const TatReconstructOptions& opt) {
  problem.validate();
  BoundaryTrace q = exterior_neumann_recovery(problem.p);
  TatData data;
  data.x_lo = problem.grid.lo[0];
  data.x_hi = problem.grid.hi[0];
  data.dt = problem.p.dt;
  data.p_lo = problem.p.series(0);
  data.p_hi = problem.p.series(1);
  data.q_lo = q.series(0);
  data.q_hi = q.series(1);
  TatOptions to;
  to.nodes = problem.grid.n[0];
  to.gamma = opt.gamma;
  to.penalty_order = opt.penalty_order;
  if (!problem.c.v.empty()) {
    const ScalarField c = problem.c;
    to.c = [c](double x) {
      const Grid& g = c.grid;
      double pos = std::clamp((x - g.lo[0]) / g.h[0], 0.0, static_cast<double>(g.n[0] - 1));
      int i = std::min(static_cast<int>(pos), g.n[0] - 2);
      double w = pos - i;
      return (1.0 - w) * c(i) + w * c(i + 1);
    };
  }
  ScalarField f = tat_qrm(data, to);
  f.grid = problem.grid;
  return f;
}

void ParabolicRouteProblem::validate() const {
  if (!(length > 0.0) || !(T > 0.0)) throw Error("parabolic route: length and T must be positive");
  if (nodes < 5 || time_nodes < 5) throw Error("parabolic route: need at least 5 nodes per axis");
  if (!(dtau > 0.0) || trace.size() < 3) throw Error("parabolic route: wave trace missing");
}

ParabolicFaceData parabolic_face_data(const ParabolicRouteProblem& problem, const ParabolicRouteOptions& opt) {
  problem.validate();
  const int nt = problem.time_nodes;
  const double dt = problem.T / (nt - 1);
  ParabolicFaceData out;
  out.t.resize(nt);
  out.dirichlet.resize(nt);
  out.derivative.assign(nt, 0.0);
  auto transformed = [&](double t) { return t > 0.0 ? reznickaya(problem.trace, problem.dtau, t) : problem.trace[0]; };
  for (int k = 0; k < nt; ++k) {
    out.t[k] = k * dt;
    out.dirichlet[k] = transformed(out.t[k]);
  }
  double tail = reznickaya_tail(problem.trace, problem.dtau, problem.T);
  if (tail > 1e-10) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "parabolic route: wave trace too short, kernel tail %.3e at t=T", tail);
    warn(buf);
  }

  // Crank-Nicolson for v_t = v_xx on (-padding, 0), v = 0 at the far end.
  const double padding = opt.padding > 0.0 ? opt.padding : 8.0 * std::sqrt(problem.T);
  const int cells = 800;
  const double h = padding / cells;
  const int sub = 20;
  const double tau = dt / sub;
  const double r = tau / (h * h);
  const int m = cells - 1;  // unknowns at x = -h .. -(cells-1) h
  std::vector<double> v(m, 0.0), rhs(m), cp(m), dp(m);
  double boundary_prev = out.dirichlet[0];
  auto deriv = [&](double v0) { return (3.0 * v0 - 4.0 * v[0] + v[1]) / (2.0 * h); };
  // f vanishes near the face, so the t = 0 derivative is f'(0) = 0.
  out.derivative[0] = 0.0;
  for (int k = 1; k < nt; ++k) {
    for (int s = 1; s <= sub; ++s) {
      double t = out.t[k - 1] + s * tau;
      double boundary = s == sub ? out.dirichlet[k] : transformed(t);
      for (int i = 0; i < m; ++i) {
        double left = i == 0 ? boundary_prev : v[i - 1];
        double right = i + 1 < m ? v[i + 1] : 0.0;
        rhs[i] = v[i] + 0.5 * r * (left - 2.0 * v[i] + right);
      }
      rhs[0] += 0.5 * r * boundary;
      // Thomas algorithm for (1 + r) on the diagonal, -r/2 off it.
      const double a = -0.5 * r, b = 1.0 + r;
      cp[0] = a / b;
      dp[0] = rhs[0] / b;
      for (int i = 1; i < m; ++i) {
        double den = b - a * cp[i - 1];
        cp[i] = a / den;
        dp[i] = (rhs[i] - a * dp[i - 1]) / den;
      }
      v[m - 1] = dp[m - 1];
      for (int i = m - 2; i >= 0; --i) v[i] = dp[i] - cp[i] * v[i + 1];
      boundary_prev = boundary;
    }
    out.derivative[k] = deriv(out.dirichlet[k]);
  }
  return out;
}

ScalarField affine_extension(const ParabolicFaceData& data, const Grid& g) {
  if (static_cast<int>(data.t.size()) != g.n[1]) throw Error("affine_extension: time grid mismatch");
  ScalarField r(g);
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i) r(i, j) = data.dirichlet[j] + (g.x(i) - g.lo[0]) * data.derivative[j];
  return r;
}

ScalarField parabolic_route_reconstruct(const ParabolicRouteProblem& problem, const ParabolicRouteOptions& opt) {
  ParabolicFaceData face = parabolic_face_data(problem, opt);
  QrmProblem q;
  q.op = QrmOperator::Parabolic;
  q.grid = Grid::rect(0.0, problem.length, problem.nodes, 0.0, problem.T, problem.time_nodes);
  q.gamma = opt.gamma;
  q.penalty_order = opt.penalty_order;
  ScalarField r = affine_extension(face, q.grid);
  Csr A = qrm_operator_matrix(q);
  std::vector<double> ar(A.rows);
  matvec(A, r.v, ar);
  q.source = ScalarField(q.grid);
  int row = 0;
  for (int j = 1; j < q.grid.n[1] - 1; ++j)
    for (int i = 1; i < q.grid.n[0] - 1; ++i, ++row) q.source(i, j) = -ar[row];
  q.data = {FaceData{Face::XLo, std::vector<double>(problem.time_nodes, 0.0),
                     std::vector<double>(problem.time_nodes, 0.0)}};
  QrmSolution s = qrm_solve(q);
  ScalarField f(Grid::line(0.0, problem.length, problem.nodes));
  for (int i = 0; i < problem.nodes; ++i) f(i) = s.u(i, 0) + r(i, 0);
  return f;
}

std::vector<double> face_wave_trace(const ScalarField& f, double T, double cfl, double& dtau) {
  const Grid& g = f.grid;
  if (g.dims != 1) throw Error("face_wave_trace: one space dimension only");
  const double h = g.h[0];
  if (g.lo[0] < 0.0) throw Error("face_wave_trace: f must live in x >= 0");
  const double offset = g.lo[0] / h;
  if (std::abs(offset - std::round(offset)) > 1e-9) throw Error("face_wave_trace: x = 0 must be a grid node");
  const int shift = static_cast<int>(std::lround(offset));
  const int pad = static_cast<int>(std::ceil(T / h)) + 10;
  const int n = g.n[0];
  const int total = pad + shift + n + pad;
  Grid big = Grid::line(-pad * h, (total - 1 - pad) * h, total);
  ScalarField c(big, 1.0), u0(big), ut0(big);
  for (int i = 0; i < n; ++i) u0(pad + shift + i) = f(i);
  SubBox omega;
  omega.first = {pad, 0};
  omega.last = {pad + 1, 0};
  WaveOptions opt;
  opt.cfl = cfl;
  WaveResult res = wave_evolve(c, u0, ut0, T, omega, opt);
  dtau = res.dt;
  return res.trace.series(0);
}

}  // namespace bkinv
