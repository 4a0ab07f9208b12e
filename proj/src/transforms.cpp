#include "bkinv/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "bkinv/log.hpp"

namespace bkinv {

std::vector<double> PseudoFreqPartition::fine_grid() const {
  std::vector<double> s;
  const int m = N * fine;
  for (int k = 0; k <= m; ++k) s.push_back(k == m ? s_min : s_max - k * fine_step());
  return s;
}

void PseudoFreqPartition::validate() const {
  if (!(s_min > 0.0)) throw Error("partition: s_min must be positive");
  if (!(s_max > s_min)) throw Error("partition: s_max must exceed s_min");
  if (N < 1) throw Error("partition: N must be at least 1");
  if (fine < 2) throw Error("partition: fine sampling must be at least 2");
}

namespace {

// Trapezoid weights times exp(-s t_k).
std::vector<double> laplace_weights(std::size_t n, double dt, double s) {
  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k)
    w[k] = ((k == 0 || k == n - 1) ? 0.5 : 1.0) * dt * std::exp(-s * dt * static_cast<double>(k));
  return w;
}

LaplaceValue weighted(const double* u, std::size_t n, const std::vector<double>& w, double dt, double s) {
  LaplaceValue r;
  double acc = 0.0, umax = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += w[k] * u[k];
    umax = std::max(umax, std::abs(u[k]));
  }
  r.value = acc;
  const double decay = std::exp(-s * dt * static_cast<double>(n - 1));
  r.tail_bound = umax * decay / s;
  r.truncated = decay > 1e-12;
  return r;
}

}  // namespace

LaplaceValue laplace_value(const std::vector<double>& u, double dt, double s) {
  if (u.empty()) return {};
  return weighted(u.data(), u.size(), laplace_weights(u.size(), dt, s), dt, s);
}

double laplace_transform(const std::vector<double>& u, double dt, double s) {
  LaplaceValue r = laplace_value(u, dt, s);
  if (r.truncated) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "laplace transform at s=%.4g truncated at T=%.4g, tail bound %.3e", s,
                  dt * static_cast<double>(u.size() - 1), r.tail_bound);
    warn(buf);
  }
  return r.value;
}

std::vector<double> laplace_transform(const BoundaryTrace& trace, double s) {
  std::vector<double> out(trace.nodes.size());
  if (trace.samples == 0) return out;
  auto w = laplace_weights(trace.samples, trace.dt, s);
  double worst = 0.0;
  bool truncated = false;
  for (std::size_t b = 0; b < trace.nodes.size(); ++b) {
    LaplaceValue r = weighted(trace.values.data() + b * trace.samples, trace.samples, w, trace.dt, s);
    out[b] = r.value;
    worst = std::max(worst, r.tail_bound);
    truncated = truncated || r.truncated;
  }
  if (truncated) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "laplace transform of trace at s=%.4g truncated at T=%.4g, tail bound %.3e", s,
                  trace.dt * (trace.samples - 1), worst);
    warn(buf);
  }
  return out;
}

ScalarField laplace_transform(const std::vector<ScalarField>& snapshots, double dt, double s) {
  if (snapshots.empty()) throw Error("laplace transform: no snapshots");
  ScalarField out(snapshots.front().grid);
  const std::size_t n = snapshots.size();
  auto w = laplace_weights(n, dt, s);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& v = snapshots[k].v;
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] += w[k] * v[i];
  }
  double decay = std::exp(-s * dt * static_cast<double>(n - 1));
  if (decay > 1e-12) {
    double umax = max_abs(snapshots.back());
    char buf[160];
    std::snprintf(buf, sizeof buf, "laplace transform of field at s=%.4g truncated, tail bound %.3e", s,
                  umax * decay / s);
    warn(buf);
  }
  return out;
}

double reznickaya(const std::vector<double>& g, double dtau, double t) {
  if (!(t > 0.0)) throw Error("reznickaya: t must be positive");
  if (2.0 * std::sqrt(t) < 3.0 * dtau) throw Error("reznickaya: kernel not resolved by the sampling");
  double acc = 0.0;
  const std::size_t n = g.size();
  for (std::size_t k = 0; k < n; ++k) {
    double tau = dtau * static_cast<double>(k);
    double kern = std::exp(-tau * tau / (4.0 * t));
    if (kern == 0.0) break;
    double w = (k == 0 || k == n - 1) ? 0.5 : 1.0;
    acc += w * kern * g[k];
  }
  return acc * dtau / std::sqrt(std::numbers::pi * t);
}

double reznickaya_tail(const std::vector<double>& g, double dtau, double t) {
  double tau_max = dtau * static_cast<double>(g.size() - 1);
  return std::exp(-tau_max * tau_max / (4.0 * t));
}

std::vector<double> reznickaya_series(const std::vector<double>& g, double dtau, const std::vector<double>& t) {
  std::vector<double> out(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) out[k] = reznickaya(g, dtau, t[k]);
  return out;
}

ScalarField compute_v(const ScalarField& w, double s) {
  if (!(s > 0.0)) throw Error("compute_v: s must be positive");
  ScalarField v(w.grid);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (!(w.v[k] > 0.0)) throw Error("compute_v: non-positive w at node " + std::to_string(k));
    v.v[k] = std::log(w.v[k]) / (s * s);
  }
  return v;
}

ScalarField compute_q(const ScalarField& v_minus, const ScalarField& v_plus, double ds) {
  if (!v_minus.grid.same_shape(v_plus.grid)) throw Error("compute_q: grids differ");
  ScalarField q(v_minus.grid);
  for (std::size_t k = 0; k < q.size(); ++k) q.v[k] = (v_plus.v[k] - v_minus.v[k]) / (2.0 * ds);
  return q;
}

double psi_from_phi(double phi_minus, double phi, double phi_plus, double s, double ds) {
  if (!(phi_minus > 0.0) || !(phi > 0.0) || !(phi_plus > 0.0))
    throw Error("boundary_psi: non-positive transformed data");
  double dlog = (std::log(phi_plus) - std::log(phi_minus)) / (2.0 * ds);
  return dlog / (s * s) - 2.0 * std::log(phi) / (s * s * s);
}

std::vector<double> boundary_psi(const BoundaryTrace& trace, double s, double ds) {
  auto lo = laplace_transform(trace, s - ds);
  auto mid = laplace_transform(trace, s);
  auto hi = laplace_transform(trace, s + ds);
  std::vector<double> out(mid.size());
  for (std::size_t b = 0; b < mid.size(); ++b) out[b] = psi_from_phi(lo[b], mid[b], hi[b], s, ds);
  return out;
}

}  // namespace bkinv
