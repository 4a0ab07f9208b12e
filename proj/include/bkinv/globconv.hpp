#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bkinv/forward.hpp"
#include "bkinv/grid.hpp"
#include "bkinv/transforms.hpp"

namespace bkinv {

// Layer-stripping reconstruction of c from boundary data of one source.
//
// With w the Laplace transform of the wave solution, v = ln w / s^2 and
// q = dv/ds, the coefficient satisfies c = Lap v + s^2 |grad v|^2.  The
// s-derivative of that identity, with q piecewise constant on the
// pseudo-frequency partition, gives one elliptic equation per layer.

struct GlobconvConfig {
  double s_min = 1.0;
  double s_max = 8.0;
  int N = 14;
  double lambda = 50.0;
  int m = 3;                        // inner iterations per layer
  double d = 0.0;                   // upper bound of c; required
  double eps_source = 3.0;          // source width in cells
  double stop_tol_c = 1e-3;         // relative L2 change of c
  double stop_tol_residual = 1e-3;  // relative decrease that still counts as decreasing
  std::uint64_t seed = 0;
  int picard_sweeps = 3;
  int fine = 10;  // s samples per layer for differencing and averages

  PseudoFreqPartition partition() const;
  void validate() const;
};

// Averages over (s_n, s_{n-1}) under the weight exp(lambda (s - s_{n-1})) of
//   a1    = 2 s^2 - 4 s rho
//   a2    = 2 s
//   kappa = 2 s rho^2 - 2 s^2 rho
// with rho = s_{n-1} - s.  The layer equation is
//   Lap q_n + (a1 g + kappa grad q_n) . grad q_n = -a2 |g|^2,
// g = grad V - h sum_{j<n} grad q_j.
struct LayerCoefficients {
  double a1 = 0.0;
  double a2 = 0.0;
  double kappa = 0.0;
  double weight_mass = 0.0;  // integral of the weight over the layer
  bool drop_gradient_term = false;
};

// Composite Simpson on `intervals` subintervals.  Rejects lambda h < 1.
LayerCoefficients derive_layer_coefficients(const PseudoFreqPartition& p, double lambda, int n,
                                            int intervals = 20000);

// Transformed boundary data on the fine s-grid, ascending in s, with one
// extra sample beyond each end for differencing.
struct BoundaryPseudoFreq {
  std::vector<double> s;
  std::vector<std::vector<double>> phi;  // [s index][boundary node]
  std::vector<std::vector<double>> psi;  // d/ds (ln phi / s^2)

  std::size_t nodes() const { return phi.empty() ? 0 : phi.front().size(); }
  // psi at s by linear interpolation.
  std::vector<double> psi_at(double s) const;
  // Trapezoid average of psi over [a, b].
  std::vector<double> psi_average(double a, double b) const;
  std::vector<double> phi_at(double s) const;
};

// From a time trace through laplace_transform.
BoundaryPseudoFreq pseudo_frequency_data(const BoundaryTrace& trace, const PseudoFreqPartition& p);
// From transformed values phi(s) on the same fine grid (elliptic route).
BoundaryPseudoFreq pseudo_frequency_data(const std::vector<double>& s,
                                         const std::vector<std::vector<double>>& phi);
// Fine s-grid used by both: s_min - ds .. s_max + ds ascending.
std::vector<double> pseudo_frequency_samples(const PseudoFreqPartition& p);

// Harmonic extension of -s^2 psi(s) into the domain, divided by s.
// `boundary` follows the order of SubBox::boundary_nodes on `domain`.
ScalarField tail_init(const std::vector<double>& psi_at_smax, const Grid& domain, double s_max);

struct LayerState {
  PseudoFreqPartition partition;
  std::vector<ScalarField> layers;  // q_1 .. q_{n-1}
  ScalarField tail;                 // V
  CoefficientModel c;               // on the domain grid
  int n = 1;
  int i = 1;
};

struct LayerSolveOptions {
  int picard_sweeps = 3;
  // Relative change of q between the last two sweeps, filled on return.
  double* last_sweep_change = nullptr;
};

// Dirichlet problem for q_n with the gradient term frozen at the previous
// sweep (dropped when the coefficients say so).
ScalarField layer_solve(const LayerState& state, const LayerCoefficients& coef, const std::vector<double>& boundary,
                        const LayerSolveOptions& opt = {});

// v(s_n) = V - h sum_{j<=n} q_j; n = 0 returns V.  `current` is q_n when
// it is not yet in `layers`.
ScalarField assemble_v(const LayerState& state, int n, const ScalarField* current = nullptr);

// c = Lap v + s^2 |grad v|^2, clamped to [1, d], edges set to 1, one
// weighted Jacobi smoothing pass.
CoefficientModel reconstruct_c(const ScalarField& v, double s, double d);

// Boundary values of a domain field in SubBox::boundary_nodes order.
std::vector<double> boundary_values(const ScalarField& f);
// Writes `boundary` into the edge nodes of `f`.
void set_boundary_values(ScalarField& f, const std::vector<double>& boundary);

// Computational setup: padded grid, measurement box, source outside it.
struct GlobconvSetup {
  Grid grid;
  SubBox omega;
  MollifiedSource source;
};

// Domain coefficient embedded in the padded grid with c = 1 outside.
CoefficientModel embed(const CoefficientModel& inner, const GlobconvSetup& setup);

struct GlobconvLogRow {
  int n = 0;
  int i = 0;
  double c_change = 0.0;
  double boundary_residual = 0.0;
  double c_min = 0.0;
  double c_max = 0.0;
};

struct GlobconvResult {
  CoefficientModel c;  // on the domain grid
  std::vector<GlobconvLogRow> log;
  bool stopped = false;
  int stop_n = 0;
  int stop_i = 0;
  double picard_change = 0.0;  // largest last-sweep change seen
};

// `initial_tail` replaces tail_init when given (diagnostic runs with a
// known tail).
GlobconvResult run_reconstruction(const BoundaryPseudoFreq& data, const GlobconvSetup& setup,
                                  const GlobconvConfig& config, const ScalarField* initial_tail = nullptr);
GlobconvResult run_reconstruction(const BoundaryTrace& g, const GlobconvSetup& setup, const GlobconvConfig& config,
                                  const ScalarField* initial_tail = nullptr);

void write_globconv_log(const std::vector<GlobconvLogRow>& log, const std::string& path);

}  // namespace bkinv
