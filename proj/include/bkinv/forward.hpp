#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "bkinv/grid.hpp"
#include "bkinv/sparse.hpp"

namespace bkinv {

// Wave coefficient c(x) with the box constraint 1 <= c <= d and c = 1 on the
// outer two node layers of its grid.
struct CoefficientModel {
  ScalarField c;
  double d = 5.0;

  static CoefficientModel background(const Grid& g, double d);
  void validate() const;
  void clamp();
  // Sets the outer boundary and first interior layer to 1.
  void reset_edges();
};

// Normalized Gaussian exp(-|x-x0|^2/eps^2), scaled so its trapezoid integral
// on the sampling grid is exactly one.
struct MollifiedSource {
  std::array<double, 2> x0{0.0, 0.0};
  double eps = 0.0;

  static MollifiedSource on_grid(const Grid& g, std::array<double, 2> x0, double width_in_cells = 3.0);
  ScalarField sample(const Grid& g) const;
};

// Time or pseudo-frequency samples at a set of boundary nodes.  Values are
// node-major: values[node * samples + k].
struct BoundaryTrace {
  std::vector<std::size_t> nodes;
  std::vector<std::array<double, 2>> coords;
  int samples = 0;
  double dt = 0.0;
  std::vector<double> values;

  double& at(std::size_t node, int k) { return values[node * samples + k]; }
  double at(std::size_t node, int k) const { return values[node * samples + k]; }
  std::vector<double> series(std::size_t node) const;
};

BoundaryTrace make_trace(const Grid& g, const std::vector<std::size_t>& nodes, int samples, double dt);

struct WaveResult {
  double dt = 0.0;
  int steps = 0;
  BoundaryTrace trace;                  // Dirichlet trace on the measurement box boundary
  std::vector<ScalarField> snapshots;   // every `stride` steps when requested
  std::vector<double> snapshot_times;
};

struct WaveOptions {
  double cfl = 0.5;
  int snapshot_stride = 0;  // 0: no snapshots
  bool check_padding = true;
};

// Leapfrog for c u_tt = Laplace u with u(0) = 0, u_t(0) = source, zero
// Dirichlet on the outer boundary.  Trace recorded on the boundary of `omega`.
WaveResult wave_forward(const CoefficientModel& c, const MollifiedSource& src, double T, const SubBox& omega,
                        const WaveOptions& opt = {});

// Leapfrog for c u_tt = Laplace u from arbitrary initial data, zero Dirichlet
// on the outer boundary.  The first step is the third-order Taylor start.
// No padding check; callers own the geometry.
WaveResult wave_evolve(const ScalarField& c, const ScalarField& u0, const ScalarField& ut0, double T,
                       const SubBox& omega, const WaveOptions& opt = {});

// Time step used by the wave solvers: T / ceil(T / (cfl * h / sqrt(dims))).
double wave_time_step(const Grid& g, double T, double cfl);

// One leapfrog update, threaded and serial reference versions.
void leapfrog_step(const ScalarField& c, const ScalarField& u, const ScalarField& u_prev, double dt,
                   ScalarField& u_next);
void leapfrog_step_serial(const ScalarField& c, const ScalarField& u, const ScalarField& u_prev, double dt,
                          ScalarField& u_next);

struct EllipticOptions {
  double tol = 1e-12;
  Precond precond = Precond::Auto;
  double source_scale = 1.0;
  bool check_positivity = true;
};

// Laplace w - s^2 c w = -source.  1D: exact discrete decaying ratio at the
// two ends.  2D: homogeneous Dirichlet on the outer boundary.
ScalarField elliptic_solve(const CoefficientModel& c, double s, const MollifiedSource& src,
                           const EllipticOptions& opt = {});
ScalarField elliptic_solve_rhs(const CoefficientModel& c, double s, const ScalarField& rhs,
                               const EllipticOptions& opt = {});

// Discrete harmonic function with the boundary values of `boundary`.
ScalarField harmonic_solve(const ScalarField& boundary);

struct HeatResult {
  double dt = 0.0;
  int steps = 0;
  std::vector<ScalarField> snapshots;  // includes t = 0
  std::vector<double> snapshot_times;
  BoundaryTrace dirichlet;             // on the boundary of `omega`, every step
  BoundaryTrace neumann;               // outward normal derivative, every step
};

// Implicit Euler for c v_t = Laplace v, v = 0 on the outer boundary.
HeatResult heat_forward(const ScalarField& c, const ScalarField& f0, double T, double dt, const SubBox& omega,
                        int snapshot_stride = 1);

// Outward normal derivative at a boundary node of `box`, one-sided second
// order from inside.  A 2D corner takes the normal of the edge it starts in
// the counter-clockwise order of SubBox::boundary_nodes.
double outward_derivative(const ScalarField& f, const SubBox& box, std::size_t node);

// Five-point (three-point in 1D) negative Laplacian with Dirichlet rows
// eliminated, over interior nodes; `map` gives the interior index per node.
struct InteriorSystem {
  Csr a;
  std::vector<int> map;
  std::vector<std::size_t> nodes;
};
InteriorSystem interior_neg_laplacian(const Grid& g, const std::vector<double>& diag_shift);

}  // namespace bkinv
