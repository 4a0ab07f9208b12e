#include "bkinv/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "bkinv/grid.hpp"

namespace bkinv {

Csr Csr::from_triplets(int rows, int cols, std::vector<Triplet> t) {
  std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  Csr m;
  m.rows = rows;
  m.cols = cols;
  m.rowptr.assign(rows + 1, 0);
  for (std::size_t k = 0; k < t.size();) {
    const Triplet& e = t[k];
    if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols) throw Error("csr: triplet out of range");
    double s = 0.0;
    std::size_t q = k;
    while (q < t.size() && t[q].row == e.row && t[q].col == e.col) s += t[q++].val;
    m.col.push_back(e.col);
    m.val.push_back(s);
    m.rowptr[e.row + 1]++;
    k = q;
  }
  for (int r = 0; r < rows; ++r) m.rowptr[r + 1] += m.rowptr[r];
  return m;
}

Csr Csr::identity(int n) { return diagonal(std::vector<double>(n, 1.0)); }

Csr Csr::diagonal(const std::vector<double>& d) {
  Csr m;
  int n = static_cast<int>(d.size());
  m.rows = m.cols = n;
  m.rowptr.resize(n + 1);
  for (int i = 0; i <= n; ++i) m.rowptr[i] = i;
  m.col.resize(n);
  for (int i = 0; i < n; ++i) m.col[i] = i;
  m.val = d;
  return m;
}

double Csr::at(int r, int c) const {
  auto b = col.begin() + rowptr[r], e = col.begin() + rowptr[r + 1];
  auto it = std::lower_bound(b, e, c);
  if (it != e && *it == c) return val[it - col.begin()];
  return 0.0;
}

std::vector<double> Csr::diag() const {
  std::vector<double> d(rows, 0.0);
  for (int r = 0; r < std::min(rows, cols); ++r) d[r] = at(r, r);
  return d;
}

void matvec(const Csr& a, const std::vector<double>& x, std::vector<double>& y) {
  y.resize(a.rows);
  const int* rp = a.rowptr.data();
  const int* ci = a.col.data();
  const double* av = a.val.data();
  const double* xv = x.data();
  double* yv = y.data();
#pragma omp parallel for schedule(static) if (a.nnz() > 50000)
  for (int r = 0; r < a.rows; ++r) {
    double s = 0.0;
    for (int k = rp[r]; k < rp[r + 1]; ++k) s += av[k] * xv[ci[k]];
    yv[r] = s;
  }
}

void matvec_serial(const Csr& a, const std::vector<double>& x, std::vector<double>& y) {
  y.resize(a.rows);
  for (int r = 0; r < a.rows; ++r) {
    double s = 0.0;
    for (int k = a.rowptr[r]; k < a.rowptr[r + 1]; ++k) s += a.val[k] * x[a.col[k]];
    y[r] = s;
  }
}

Csr transpose(const Csr& a) {
  Csr t;
  t.rows = a.cols;
  t.cols = a.rows;
  t.rowptr.assign(a.cols + 1, 0);
  for (int c : a.col) t.rowptr[c + 1]++;
  for (int r = 0; r < a.cols; ++r) t.rowptr[r + 1] += t.rowptr[r];
  t.col.resize(a.nnz());
  t.val.resize(a.nnz());
  std::vector<int> fill(t.rowptr.begin(), t.rowptr.end() - 1);
  for (int r = 0; r < a.rows; ++r) {
    for (int k = a.rowptr[r]; k < a.rowptr[r + 1]; ++k) {
      int dst = fill[a.col[k]]++;
      t.col[dst] = r;
      t.val[dst] = a.val[k];
    }
  }
  return t;
}

Csr multiply(const Csr& a, const Csr& b) {
  if (a.cols != b.rows) throw Error("csr multiply: shape mismatch");
  Csr m;
  m.rows = a.rows;
  m.cols = b.cols;
  m.rowptr.assign(a.rows + 1, 0);
  std::vector<double> acc(b.cols, 0.0);
  std::vector<int> mark(b.cols, -1);
  std::vector<int> pattern;
  for (int r = 0; r < a.rows; ++r) {
    pattern.clear();
    for (int k = a.rowptr[r]; k < a.rowptr[r + 1]; ++k) {
      int j = a.col[k];
      double av = a.val[k];
      for (int q = b.rowptr[j]; q < b.rowptr[j + 1]; ++q) {
        int c = b.col[q];
        if (mark[c] != r) {
          mark[c] = r;
          acc[c] = 0.0;
          pattern.push_back(c);
        }
        acc[c] += av * b.val[q];
      }
    }
    std::sort(pattern.begin(), pattern.end());
    for (int c : pattern) {
      m.col.push_back(c);
      m.val.push_back(acc[c]);
    }
    m.rowptr[r + 1] = static_cast<int>(m.col.size());
  }
  return m;
}

Csr add(const Csr& a, double alpha, const Csr& b, double beta) {
  if (a.rows != b.rows || a.cols != b.cols) throw Error("csr add: shape mismatch");
  Csr m;
  m.rows = a.rows;
  m.cols = a.cols;
  m.rowptr.assign(a.rows + 1, 0);
  for (int r = 0; r < a.rows; ++r) {
    int p = a.rowptr[r], pe = a.rowptr[r + 1];
    int q = b.rowptr[r], qe = b.rowptr[r + 1];
    while (p < pe || q < qe) {
      int ca = p < pe ? a.col[p] : a.cols;
      int cb = q < qe ? b.col[q] : b.cols;
      if (ca == cb) {
        m.col.push_back(ca);
        m.val.push_back(alpha * a.val[p++] + beta * b.val[q++]);
      } else if (ca < cb) {
        m.col.push_back(ca);
        m.val.push_back(alpha * a.val[p++]);
      } else {
        m.col.push_back(cb);
        m.val.push_back(beta * b.val[q++]);
      }
    }
    m.rowptr[r + 1] = static_cast<int>(m.col.size());
  }
  return m;
}

Csr scaled(const Csr& a, double s) {
  Csr m = a;
  for (double& v : m.val) v *= s;
  return m;
}

Csr principal_submatrix(const Csr& a, const std::vector<int>& map, int new_size) {
  Csr m;
  m.rows = m.cols = new_size;
  m.rowptr.assign(new_size + 1, 0);
  std::vector<int> order(new_size, -1);
  for (int r = 0; r < a.rows; ++r)
    if (map[r] >= 0) order[map[r]] = r;
  for (int nr = 0; nr < new_size; ++nr) {
    int r = order[nr];
    std::vector<std::pair<int, double>> row;
    for (int k = a.rowptr[r]; k < a.rowptr[r + 1]; ++k)
      if (map[a.col[k]] >= 0) row.emplace_back(map[a.col[k]], a.val[k]);
    std::sort(row.begin(), row.end());
    for (auto& e : row) {
      m.col.push_back(e.first);
      m.val.push_back(e.second);
    }
    m.rowptr[nr + 1] = static_cast<int>(m.col.size());
  }
  return m;
}

Csr select_columns(const Csr& a, const std::vector<int>& map, int new_cols) {
  Csr m;
  m.rows = a.rows;
  m.cols = new_cols;
  m.rowptr.assign(a.rows + 1, 0);
  for (int r = 0; r < a.rows; ++r) {
    std::vector<std::pair<int, double>> row;
    for (int k = a.rowptr[r]; k < a.rowptr[r + 1]; ++k)
      if (map[a.col[k]] >= 0) row.emplace_back(map[a.col[k]], a.val[k]);
    std::sort(row.begin(), row.end());
    for (auto& e : row) {
      m.col.push_back(e.first);
      m.val.push_back(e.second);
    }
    m.rowptr[r + 1] = static_cast<int>(m.col.size());
  }
  return m;
}

int bandwidth(const Csr& a) {
  int b = 0;
  for (int r = 0; r < a.rows; ++r)
    for (int k = a.rowptr[r]; k < a.rowptr[r + 1]; ++k) b = std::max(b, std::abs(a.col[k] - r));
  return b;
}

BandedLu::BandedLu(const Csr& a) : n_(a.rows), b_(bandwidth(a)) {
  if (a.rows != a.cols) throw Error("banded lu: matrix not square");
  const int w = 2 * b_ + 1;
  lu_.assign(static_cast<std::size_t>(n_) * w, 0.0);
  for (int r = 0; r < n_; ++r)
    for (int k = a.rowptr[r]; k < a.rowptr[r + 1]; ++k) at(r, a.col[k]) = a.val[k];
  for (int k = 0; k < n_; ++k) {
    double piv = at(k, k);
    if (piv == 0.0 || !std::isfinite(piv)) throw Error("banded lu: zero pivot");
    int rmax = std::min(n_ - 1, k + b_);
    for (int r = k + 1; r <= rmax; ++r) {
      double l = at(r, k) / piv;
      if (l == 0.0) continue;
      at(r, k) = l;
      for (int c = k + 1; c <= rmax; ++c) at(r, c) -= l * at(k, c);
    }
  }
}

void BandedLu::solve(std::vector<double>& x) const {
  for (int r = 0; r < n_; ++r) {
    double s = x[r];
    for (int c = std::max(0, r - b_); c < r; ++c) s -= at(r, c) * x[c];
    x[r] = s;
  }
  for (int r = n_ - 1; r >= 0; --r) {
    double s = x[r];
    int cmax = std::min(n_ - 1, r + b_);
    for (int c = r + 1; c <= cmax; ++c) s -= at(r, c) * x[c];
    x[r] = s / at(r, r);
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

bool banded_affordable(const Csr& a, double work_limit) {
  double b = bandwidth(a);
  return static_cast<double>(a.rows) * b * b <= work_limit;
}

namespace {

using Apply = std::function<void(const std::vector<double>&, std::vector<double>&)>;

double inf_norm(const Csr& a) {
  double m = 0.0;
  for (int r = 0; r < a.rows; ++r) {
    double s = 0.0;
    for (int k = a.rowptr[r]; k < a.rowptr[r + 1]; ++k) s += std::abs(a.val[k]);
    m = std::max(m, s);
  }
  return m;
}

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Normwise backward error |r| / (|A||x| + |b|) in the infinity norm.
double backward_error(double a_norm, const std::vector<double>& r, const std::vector<double>& x,
                      const std::vector<double>& b) {
  return inf_norm(r) / (a_norm * inf_norm(x) + inf_norm(b));
}

// Relative residual below tolerance, or a solution exact to rounding (the
// relative residual of an ill-conditioned system can stall above tol).
bool done(const SolveReport& rep, double tol) {
  return rep.residual <= tol || rep.backward_error <= kRoundingBackwardError;
}

double objective(const Csr& a, const std::vector<double>& b, const std::vector<double>& x) {
  std::vector<double> ax;
  matvec(a, x, ax);
  return 0.5 * dot(x, ax) - dot(b, x);
}

SolveReport run_cg(const Csr& a, const std::vector<double>& b, std::vector<double>& x, const SolveOptions& opt,
                   const Apply& precond) {
  const std::size_t n = b.size();
  if (x.size() != n) x.assign(n, 0.0);
  SolveReport rep;
  double bn = norm2(b);
  if (bn == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    rep.converged = true;
    return rep;
  }
  std::vector<double> r(n), z, p, ap;
  matvec(a, x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  precond(r, z);
  p = z;
  double rz = dot(r, z);
  if (opt.record_objective) rep.objective.push_back(objective(a, b, x));
  const double a_norm = inf_norm(a);
  rep.residual = norm2(r) / bn;
  rep.backward_error = backward_error(a_norm, r, x, b);
  for (int it = 0; it < opt.max_iter && !done(rep, opt.tol); ++it) {
    matvec(a, p, ap);
    double pap = dot(p, ap);
    if (!(pap > 0.0)) break;
    double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    rep.iterations = it + 1;
    // Recompute the true residual now and then to avoid drift.
    if ((it + 1) % 50 == 0) {
      matvec(a, x, ap);
      for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
    }
    rep.residual = norm2(r) / bn;
    rep.backward_error = backward_error(a_norm, r, x, b);
    if (opt.record_objective) rep.objective.push_back(objective(a, b, x));
    precond(r, z);
    double rz_new = dot(r, z);
    double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  matvec(a, x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  rep.residual = norm2(r) / bn;
  rep.backward_error = backward_error(a_norm, r, x, b);
  rep.converged = done(rep, opt.tol);
  return rep;
}

SolveReport run_bicgstab(const Csr& a, const std::vector<double>& b, std::vector<double>& x,
                         const SolveOptions& opt, const Apply& precond) {
  const std::size_t n = b.size();
  if (x.size() != n) x.assign(n, 0.0);
  SolveReport rep;
  double bn = norm2(b);
  if (bn == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    rep.converged = true;
    return rep;
  }
  std::vector<double> r(n), rhat, p(n, 0.0), v(n, 0.0), s(n), t(n), phat, shat, tmp;
  matvec(a, x, tmp);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - tmp[i];
  rhat = r;
  double rho = 1.0, alpha = 1.0, omega = 1.0;
  const double a_norm = inf_norm(a);
  rep.residual = norm2(r) / bn;
  rep.backward_error = backward_error(a_norm, r, x, b);
  for (int it = 0; it < opt.max_iter && !done(rep, opt.tol); ++it) {
    double rho_new = dot(rhat, r);
    if (rho_new == 0.0) break;
    double beta = (rho_new / rho) * (alpha / omega);
    rho = rho_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
    precond(p, phat);
    matvec(a, phat, v);
    double rv = dot(rhat, v);
    if (rv == 0.0) break;
    alpha = rho / rv;
    for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
    rep.iterations = it + 1;
    if (norm2(s) / bn <= opt.tol) {
      for (std::size_t i = 0; i < n; ++i) x[i] += alpha * phat[i];
      break;
    }
    precond(s, shat);
    matvec(a, shat, t);
    double tt = dot(t, t);
    omega = tt > 0.0 ? dot(t, s) / tt : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * phat[i] + omega * shat[i];
      r[i] = s[i] - omega * t[i];
    }
    rep.residual = norm2(r) / bn;
    rep.backward_error = backward_error(a_norm, r, x, b);
    if (omega == 0.0) break;
  }
  matvec(a, x, tmp);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - tmp[i];
  rep.residual = norm2(r) / bn;
  rep.backward_error = backward_error(a_norm, r, x, b);
  rep.converged = done(rep, opt.tol);
  return rep;
}

Precond resolve(const Csr& a, const SolveOptions& opt) {
  if (opt.precond != Precond::Auto) return opt.precond;
  return banded_affordable(a, opt.band_work_limit) ? Precond::Banded : Precond::Jacobi;
}

std::vector<double> inverse_diagonal(const Csr& a) {
  auto d = a.diag();
  for (double& v : d) v = v != 0.0 ? 1.0 / v : 1.0;
  return d;
}

Apply make_apply(Precond kind, const BandedLu* lu, const std::vector<double>* inv_diag) {
  switch (kind) {
    case Precond::Banded:
      return [lu](const std::vector<double>& r, std::vector<double>& z) {
        z = r;
        lu->solve(z);
      };
    case Precond::Jacobi:
      return [inv_diag](const std::vector<double>& r, std::vector<double>& z) {
        z.resize(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) z[i] = r[i] * (*inv_diag)[i];
      };
    default:
      return [](const std::vector<double>& r, std::vector<double>& z) { z = r; };
  }
}

}  // namespace

SolveReport cg(const Csr& a, const std::vector<double>& b, std::vector<double>& x, const SolveOptions& opt) {
  Precond kind = resolve(a, opt);
  BandedLu lu;
  std::vector<double> inv;
  if (kind == Precond::Banded) lu = BandedLu(a);
  if (kind == Precond::Jacobi) inv = inverse_diagonal(a);
  return run_cg(a, b, x, opt, make_apply(kind, &lu, &inv));
}

SolveReport bicgstab(const Csr& a, const std::vector<double>& b, std::vector<double>& x,
                     const SolveOptions& opt) {
  Precond kind = resolve(a, opt);
  BandedLu lu;
  std::vector<double> inv;
  if (kind == Precond::Banded) lu = BandedLu(a);
  if (kind == Precond::Jacobi) inv = inverse_diagonal(a);
  return run_bicgstab(a, b, x, opt, make_apply(kind, &lu, &inv));
}

namespace {

void throw_unconverged(const SolveReport& rep) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "sparse_solve: no convergence after %d iterations, residual %.3e",
                rep.iterations, rep.residual);
  throw Error(buf);
}

}  // namespace

SolveReport sparse_solve(const Csr& a, const std::vector<double>& b, std::vector<double>& x, bool spd,
                         const SolveOptions& opt) {
  if (a.rows != a.cols) throw Error("sparse_solve: matrix not square");
  SolveReport rep = spd ? cg(a, b, x, opt) : bicgstab(a, b, x, opt);
  if (!rep.converged) throw_unconverged(rep);
  return rep;
}

LinearSolver::LinearSolver(Csr a, bool spd, SolveOptions opt) : a_(std::move(a)), spd_(spd), opt_(opt) {
  if (a_.rows != a_.cols) throw Error("linear solver: matrix not square");
  Precond kind = resolve(a_, opt_);
  if (kind == Precond::Banded) lu_ = BandedLu(a_);
  if (kind == Precond::Jacobi) inv_diag_ = inverse_diagonal(a_);
  opt_.precond = kind;
}

SolveReport LinearSolver::solve(const std::vector<double>& b, std::vector<double>& x) const {
  Apply ap = make_apply(opt_.precond, &lu_, &inv_diag_);
  if (!lu_.empty() && x.size() != b.size()) {
    x = b;
    lu_.solve(x);
  }
  SolveReport rep = spd_ ? run_cg(a_, b, x, opt_, ap) : run_bicgstab(a_, b, x, opt_, ap);
  if (!rep.converged) throw_unconverged(rep);
  return rep;
}

}  // namespace bkinv
