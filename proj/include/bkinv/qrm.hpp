#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bkinv/forward.hpp"
#include "bkinv/grid.hpp"
#include "bkinv/rng.hpp"
#include "bkinv/sparse.hpp"

namespace bkinv {

// Operators on a 2D tensor grid.  Axis 0 is x; axis 1 is y (elliptic) or t.
//   Elliptic:   u_xx + u_yy + b0 u
//   Parabolic:  c u_t - u_xx - b0 u      (central difference in t)
//   Hyperbolic: c u_tt - u_xx - b0 u
// Rows are the interior nodes.
enum class QrmOperator { Elliptic, Parabolic, Hyperbolic };

enum class Face { XLo, XHi, YLo };

// Dirichlet values p and outward normal derivative q along one face, indexed
// by the node position along the face.
struct FaceData {
  Face face = Face::XLo;
  std::vector<double> p;
  std::vector<double> q;
};
using CauchyData = std::vector<FaceData>;

struct QrmProblem {
  QrmOperator op = QrmOperator::Elliptic;
  Grid grid;
  ScalarField c;       // leading time coefficient; empty means 1
  ScalarField b0;      // zeroth-order coefficient; empty means 0
  ScalarField source;  // right-hand side on the grid; empty means 0
  CauchyData data;
  double gamma = 1e-4;
  int penalty_order = 2;

  void validate() const;
};

struct QrmSolveOptions {
  double tol = 1e-12;
  std::vector<double> initial;  // free-node start vector; empty uses the direct factorization
  bool record_objective = false;
  Precond precond = Precond::Auto;
};

struct QrmSolution {
  ScalarField u;
  double objective = 0.0;
  double residual = 0.0;       // |Au - f|, cell-volume weighted
  double penalty_norm = 0.0;   // sqrt(u' R u)
  double gradient_norm = 0.0;  // |M u - b| / |b| on free nodes
  int iterations = 0;
  std::vector<double> objective_history;
};

// Discrete operator rows on interior nodes (rows x grid nodes).
Csr qrm_operator_matrix(const QrmProblem& problem);
// Sum over |alpha| <= order of binomial-weighted |D^alpha u|^2, times cell volume.
Csr qrm_penalty_matrix(const Grid& g, int order);
// Nodes fixed by the Cauchy data: each data face and the layer next to it.
std::vector<char> qrm_constrained_nodes(const QrmProblem& problem);

struct Homogenized {
  QrmProblem problem;  // zero data, source f - A F
  ScalarField shift;   // F
};

// F = harmonic-in-space extension of p plus chi(d) d (q_in - d_n E p) near
// each data face, chi a C1 cutoff equal to 1 on the first two layers.
// F matches p on the face and p - h q on the next layer exactly.
Homogenized homogenize(const QrmProblem& problem, double cutoff_width = 0.5);

// Minimizer of |Au - f|^2 + gamma u'Ru over fields with zero Cauchy data.
QrmSolution qrm_solve(const QrmProblem& problem, const QrmSolveOptions& opt = {});

// homogenize + qrm_solve + shift back.
QrmSolution qrm_reconstruct(const QrmProblem& problem, const QrmSolveOptions& opt = {});

// Discrete H^1 norm: sqrt(sum (u^2 + u_x^2 + u_y^2)) times sqrt(cell volume),
// over nodes with mask != 0 (empty mask: all).
double h1_norm(const ScalarField& u, const std::vector<char>& mask = {});

// Cauchy data of a known field on the given faces, q matching the
// discrete constraint (p - layer1) / h.
CauchyData cauchy_data_from_field(const ScalarField& u, const std::vector<Face>& faces);

struct RateRow {
  double delta = 0.0;
  double gamma = 0.0;
  double error_region = 0.0;
  double error_full = 0.0;
  double slope_running = 0.0;  // least-squares slope over rows so far (NaN for the first)
};

struct RateSetup {
  QrmProblem problem;        // exact data filled in; gamma overwritten per level
  ScalarField exact;         // u*
  std::vector<char> region;  // error region mask; empty means full grid
  NoiseKind noise = NoiseKind::Iid;
  double gamma_factor = 1.0;  // gamma = factor * delta^2
  int repeats = 1;            // noise draws averaged per level
};

struct RateResult {
  std::vector<RateRow> rows;
  double slope = 0.0;
  double noiseless_error = 0.0;
};

// Noise of level delta on p and q of every face, independent streams per
// level, gamma = factor delta^2.  Levels run in parallel.
RateResult rate_experiment(const RateSetup& setup, const std::vector<double>& deltas, std::uint64_t seed);
void write_rate_csv(const RateResult& r, const std::string& path);

// Least-squares slope of log(err) against log(delta).
double loglog_slope(const std::vector<double>& delta, const std::vector<double>& err);

// Lateral wave data on x = lo and x = hi for t in [0, T], sampled every
// `dt`, u(x, 0) = f, u_t(x, 0) = 0.
struct TatData {
  double x_lo = -1.0;
  double x_hi = 1.0;
  double dt = 0.0;
  std::vector<double> p_lo, p_hi;  // Dirichlet
  std::vector<double> q_lo, q_hi;  // outward normal derivative
  double T() const { return dt * static_cast<double>(p_lo.size() - 1); }
};

struct TatOptions {
  int nodes = 101;                            // x nodes on [x_lo, x_hi]; dt = dx
  double gamma = 1e-6;
  int penalty_order = 2;
  std::function<double(double)> c = nullptr;  // leading coefficient; nullptr means 1
};

// Even extension to (-T, T), hyperbolic QRM on [x_lo, x_hi] x [-T, T], t = 0 slice.
ScalarField tat_qrm(const TatData& data, const TatOptions& opt);

// Resamples a uniformly sampled series at a new step by linear interpolation.
std::vector<double> resample(const std::vector<double>& v, double dt, double new_dt, int count);

}  // namespace bkinv
