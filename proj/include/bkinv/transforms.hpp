#pragma once

#include <vector>

#include "bkinv/forward.hpp"
#include "bkinv/grid.hpp"

namespace bkinv {

// s_min = s_N < ... < s_0 = s_max, N subintervals of width h.
struct PseudoFreqPartition {
  double s_min = 1.0;
  double s_max = 8.0;
  int N = 14;
  // Samples per subinterval of the fine s-grid used for differencing and
  // interval averages.
  int fine = 10;

  double h() const { return (s_max - s_min) / N; }
  double s(int n) const { return n == N ? s_min : s_max - n * h(); }
  double fine_step() const { return h() / fine; }
  // Fine-grid points, descending from s_max to s_min (N*fine + 1 values).
  std::vector<double> fine_grid() const;
  void validate() const;
};

struct LaplaceValue {
  double value = 0.0;
  double tail_bound = 0.0;  // max|u| * exp(-s T_max) / s
  bool truncated = false;   // exp(-s T_max) > 1e-12
};

// Trapezoid quadrature of the Laplace integral over samples u(k dt),
// k = 0..n-1, truncated at T_max = (n-1) dt.
LaplaceValue laplace_value(const std::vector<double>& u, double dt, double s);
// Same, emitting a warning with the tail bound when the truncation test fails.
double laplace_transform(const std::vector<double>& u, double dt, double s);
// Per trace node.
std::vector<double> laplace_transform(const BoundaryTrace& trace, double s);
// Transform of a sequence of equally spaced snapshots.
ScalarField laplace_transform(const std::vector<ScalarField>& snapshots, double dt, double s);

// (1/sqrt(pi t)) int_0^inf exp(-tau^2/(4t)) g(tau) dtau for samples g(k dtau).
// Rejects t <= 0 and kernels narrower than three samples.
double reznickaya(const std::vector<double>& g, double dtau, double t);
// Gaussian tail beyond the last sample, exp(-tau_max^2/(4t)).
double reznickaya_tail(const std::vector<double>& g, double dtau, double t);
std::vector<double> reznickaya_series(const std::vector<double>& g, double dtau, const std::vector<double>& t);

// ln w / s^2, rejecting non-positive w.
ScalarField compute_v(const ScalarField& w, double s);
// Central difference in s: (v(s+ds) - v(s-ds)) / (2 ds).
ScalarField compute_q(const ScalarField& v_minus, const ScalarField& v_plus, double ds);

// d/ds (ln phi / s^2) from transformed values at s-ds, s, s+ds.
double psi_from_phi(double phi_minus, double phi, double phi_plus, double s, double ds);
// psi on every trace node at s, differencing the transform with step ds.
std::vector<double> boundary_psi(const BoundaryTrace& trace, double s, double ds);

}  // namespace bkinv
