#pragma once

#include <cstddef>
#include <vector>

namespace bkinv {

struct Triplet {
  int row;
  int col;
  double val;
};

// Compressed sparse row matrix.  Column indices are sorted within a row and
// duplicates are summed on construction.
struct Csr {
  int rows = 0;
  int cols = 0;
  std::vector<int> rowptr{0};
  std::vector<int> col;
  std::vector<double> val;

  static Csr from_triplets(int rows, int cols, std::vector<Triplet> t);
  static Csr identity(int n);
  static Csr diagonal(const std::vector<double>& d);
  std::size_t nnz() const { return val.size(); }
  double at(int r, int c) const;
  std::vector<double> diag() const;
};

void matvec(const Csr& a, const std::vector<double>& x, std::vector<double>& y);
// Reference implementation without threading, kept for tests and benchmarks.
void matvec_serial(const Csr& a, const std::vector<double>& x, std::vector<double>& y);

Csr transpose(const Csr& a);
Csr multiply(const Csr& a, const Csr& b);
// alpha*A + beta*B, same shape.
Csr add(const Csr& a, double alpha, const Csr& b, double beta);
Csr scaled(const Csr& a, double s);
// Keep rows/cols whose map entry is >= 0; map gives the new index.
Csr principal_submatrix(const Csr& a, const std::vector<int>& map, int new_size);
// Keep all rows, remap columns (dropping those mapped to -1).
Csr select_columns(const Csr& a, const std::vector<int>& map, int new_cols);
int bandwidth(const Csr& a);

// Banded LU without pivoting.  Exact for the banded SPD and diagonally
// dominant systems assembled in this library.
class BandedLu {
 public:
  BandedLu() = default;
  explicit BandedLu(const Csr& a);
  void solve(std::vector<double>& x) const;
  int band() const { return b_; }
  bool empty() const { return n_ == 0; }

 private:
  int n_ = 0;
  int b_ = 0;
  std::vector<double> lu_;  // row-major, 2b+1 entries per row
  double& at(int r, int c) { return lu_[static_cast<std::size_t>(r) * (2 * b_ + 1) + (c - r + b_)]; }
  double at(int r, int c) const { return lu_[static_cast<std::size_t>(r) * (2 * b_ + 1) + (c - r + b_)]; }
};

enum class Precond { None, Jacobi, Banded, Auto };

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 20000;
  Precond precond = Precond::Auto;
  // Under Auto the banded factorization is used when n * band^2 stays
  // below this work budget.
  double band_work_limit = 3e9;
  bool record_objective = false;
};

bool banded_affordable(const Csr& a, double work_limit);

// A solve also counts as converged when its normwise backward error is at
// this level, i.e. the answer is exact to rounding.
inline constexpr double kRoundingBackwardError = 1e-13;

struct SolveReport {
  int iterations = 0;
  double residual = 0.0;        // |b - Ax| / |b|
  double backward_error = 0.0;  // |b - Ax| / (|A||x| + |b|), infinity norm
  bool converged = false;
  std::vector<double> objective;  // 0.5 x'Ax - b'x per iteration when recorded
};

SolveReport cg(const Csr& a, const std::vector<double>& b, std::vector<double>& x,
               const SolveOptions& opt = {});
SolveReport bicgstab(const Csr& a, const std::vector<double>& b, std::vector<double>& x,
                     const SolveOptions& opt = {});
// CG for symmetric positive definite matrices, BiCGSTAB otherwise.  Throws
// on non-convergence with the final residual in the message.
SolveReport sparse_solve(const Csr& a, const std::vector<double>& b, std::vector<double>& x,
                         bool spd, const SolveOptions& opt = {});

// One matrix, many right-hand sides.  The preconditioner (banded LU when
// affordable) is built once.
class LinearSolver {
 public:
  LinearSolver() = default;
  LinearSolver(Csr a, bool spd, SolveOptions opt = {});
  SolveReport solve(const std::vector<double>& b, std::vector<double>& x) const;
  const Csr& matrix() const { return a_; }
  bool direct() const { return !lu_.empty(); }

 private:
  Csr a_;
  bool spd_ = true;
  SolveOptions opt_;
  BandedLu lu_;
  std::vector<double> inv_diag_;
};

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);

}  // namespace bkinv
