#include "bkinv/carleman.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

namespace bkinv {

void ParabolicCwf::validate() const {
  if (!(lambda > 0.0)) throw Error("parabolic weight: lambda must be positive");
  if (!(nu > 2.0)) throw Error("parabolic weight: nu must exceed 2");
  if (!(alpha > 0.0 && alpha < eta && eta < 1.0)) throw Error("parabolic weight: need 0 < alpha < eta < 1");
  if (!(T > 0.0)) throw Error("parabolic weight: T must be positive");
}

void HyperbolicCwf::validate() const {
  if (!(lambda > 0.0)) throw Error("hyperbolic weight: lambda must be positive");
  if (!(eta > 0.0 && eta < 1.0)) throw Error("hyperbolic weight: eta must lie in (0, 1)");
  if (!(gamma > 0.0)) throw Error("hyperbolic weight: gamma must be positive");
  if (!(radius > 0.0)) throw Error("hyperbolic weight: radius must be positive");
}

double PseudoFreqCwf::operator()(double s) const { return std::exp(lambda * (s - s_hi)); }

std::array<double, 3> TensorBump::profile(int axis, double z) const {
  const double w = width[axis];
  const double r = (z - center[axis]) / w;
  if (std::abs(r) >= 1.0) return {0.0, 0.0, 0.0};
  const double q = 1.0 - r * r;
  return {q * q * q, -6.0 * r * q * q / w, (-6.0 * q * q + 24.0 * r * r * q) / (w * w)};
}

nlohmann::ordered_json to_json(const EstimateReport& r) {
  nlohmann::ordered_json j;
  j["lambda"] = r.lambda;
  j["lhs"] = r.lhs;
  j["rhs"] = r.rhs;
  j["ratio"] = r.ratio;
  j["log_scale"] = r.log_scale;
  j["holds"] = r.holds;
  return j;
}

namespace {

std::vector<double> trapezoid_weights(int n, double h) {
  std::vector<double> w(n, h);
  w.front() = w.back() = 0.5 * h;
  return w;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> z(n);
  for (int k = 0; k < n; ++k) z[k] = a + (b - a) * k / (n - 1);
  return z;
}

int odd_count(double span, double slope, double cell_product, int lo, int hi) {
  int n = static_cast<int>(std::ceil(span * slope / cell_product)) + 1;
  n = std::clamp(n, lo, hi);
  return n | 1;
}

// Range of t^2 over [c - w, c + w].
std::array<double, 2> square_range(double c, double w) {
  double a = c - w, b = c + w;
  double hi = std::max(a * a, b * b);
  double lo = (a <= 0.0 && b >= 0.0) ? 0.0 : std::min(a * a, b * b);
  return {lo, hi};
}

}  // namespace

void check_parabolic_support(const ParabolicCwf& shape, const TensorBump& u) {
  if (u.center.size() != 2 || u.width.size() != 2) throw Error("parabolic bump: expected (x, t) axes");
  double x_lo = u.center[0] - u.width[0], x_hi = u.center[0] + u.width[0];
  auto t2 = square_range(u.center[1], u.width[1]);
  double psi_max = x_hi + t2[1] / (2.0 * shape.T * shape.T) + shape.alpha;
  if (!(x_lo > 0.0) || !(psi_max < shape.eta))
    throw Error("parabolic bump: support not compactly inside the admissible domain");
}

void check_hyperbolic_support(const HyperbolicCwf& shape, const TensorBump& u) {
  if (u.center.size() != 3 || u.width.size() != 3) throw Error("hyperbolic bump: expected (x, y, t) axes");
  auto dx = square_range(u.center[0] - shape.x0[0], u.width[0]);
  auto dy = square_range(u.center[1] - shape.x0[1], u.width[1]);
  auto t2 = square_range(u.center[2], u.width[2]);
  double xi_min = dx[0] + dy[0] - shape.eta * t2[1];
  auto ax = square_range(u.center[0], u.width[0]);
  auto ay = square_range(u.center[1], u.width[1]);
  if (!(xi_min > shape.gamma) || !(ax[1] + ay[1] < shape.radius * shape.radius))
    throw Error("hyperbolic bump: support not compactly inside the admissible domain");
}

ParabolicIntegrals::ParabolicIntegrals(const ParabolicCwf& shape, const SpaceTimeCoefficient& a, const TensorBump& u,
                                       double lambda_max)
    : lambda_max_(lambda_max) {
  shape.validate();
  check_parabolic_support(shape, u);
  const double nu = shape.nu;
  const double x_lo = u.center[0] - u.width[0], x_hi = u.center[0] + u.width[0];
  const double t_lo = u.center[1] - u.width[1], t_hi = u.center[1] + u.width[1];
  auto t2 = square_range(u.center[1], u.width[1]);
  const double psi_min = x_lo + t2[0] / (2.0 * shape.T * shape.T) + shape.alpha;
  const double psi_max = x_hi + t2[1] / (2.0 * shape.T * shape.T) + shape.alpha;
  e_hi_ = std::pow(psi_min, -nu);
  e_lo_ = std::pow(psi_max, -nu);

  // Resolve the steepest exponent slope of exp(2 lambda psi^-nu).
  const double slope_x = 2.0 * lambda_max * nu * std::pow(psi_min, -nu - 1.0);
  const double slope_t = slope_x * std::sqrt(t2[1]) / (shape.T * shape.T);
  const int nx = odd_count(x_hi - x_lo, slope_x, 0.4, 401, 4001);
  const int nt = odd_count(t_hi - t_lo, slope_t, 0.4, 401, 4001);
  nodes_ = {nx, nt};
  auto xs = linspace(x_lo, x_hi, nx);
  auto ts = linspace(t_lo, t_hi, nt);
  auto wx = trapezoid_weights(nx, (x_hi - x_lo) / (nx - 1));
  auto wt = trapezoid_weights(nt, (t_hi - t_lo) / (nt - 1));
  std::vector<std::array<double, 3>> px(nx), pt(nt);
  for (int i = 0; i < nx; ++i) px[i] = u.profile(0, xs[i]);
  for (int j = 0; j < nt; ++j) pt[j] = u.profile(1, ts[j]);

  const int nbins = 1 << 16;
  bin_ = (e_hi_ - e_lo_) / nbins;
  if (!(bin_ > 0.0)) bin_ = 1.0;
  bins_.assign(nbins, {});
  const double amp = u.amplitude;
  for (int j = 0; j < nt; ++j) {
    for (int i = 0; i < nx; ++i) {
      double w = wx[i] * wt[j];
      double val = amp * px[i][0] * pt[j][0];
      if (val == 0.0 && px[i][2] == 0.0 && pt[j][1] == 0.0) continue;
      double ux = amp * px[i][1] * pt[j][0];
      double uxx = amp * px[i][2] * pt[j][0];
      double ut = amp * px[i][0] * pt[j][1];
      double lu = ut - a(xs[i], ts[j]) * uxx;
      double psi = shape.psi(xs[i], ts[j]);
      double e = std::pow(psi, -nu);
      int b = std::clamp(static_cast<int>((e - e_lo_) / bin_), 0, nbins - 1);
      double d = e - (e_lo_ + (b + 0.5) * bin_);
      double q[3] = {lu * lu, ux * ux, std::pow(psi, -2.0 * nu - 2.0) * val * val};
      auto& m = bins_[b];
      for (int k = 0; k < 3; ++k) {
        double wq = w * q[k];
        m[3 * k] += wq;
        m[3 * k + 1] += wq * d;
        m[3 * k + 2] += wq * d * d;
      }
    }
  }
}

ParabolicIntegrals::Sums ParabolicIntegrals::at(double lambda) const {
  if (lambda > lambda_max_ * (1.0 + 1e-12)) throw Error("parabolic integrals: lambda beyond resolved range");
  Sums s;
  s.log_scale = 2.0 * lambda * e_hi_;
  double acc[3] = {0.0, 0.0, 0.0};
  const double y1 = 2.0 * lambda, y2 = 2.0 * lambda * lambda;
  for (std::size_t b = 0; b < bins_.size(); ++b) {
    const auto& m = bins_[b];
    if (m[0] == 0.0 && m[3] == 0.0 && m[6] == 0.0) continue;
    double ec = e_lo_ + (static_cast<double>(b) + 0.5) * bin_;
    double f = std::exp(2.0 * lambda * (ec - e_hi_));
    for (int k = 0; k < 3; ++k) acc[k] += f * (m[3 * k] + y1 * m[3 * k + 1] + y2 * m[3 * k + 2]);
  }
  s.lhs = acc[0];
  s.grad = acc[1];
  s.zero = acc[2];
  return s;
}

HyperbolicIntegrals::HyperbolicIntegrals(const HyperbolicCwf& shape, const SeparableSpeed& speed, const TensorBump& u,
                                         int nodes_per_axis)
    : shape_(shape), u_(u) {
  shape.validate();
  check_hyperbolic_support(shape, u);
  const int n = nodes_per_axis | 1;
  for (int a = 0; a < 3; ++a) {
    z_[a] = linspace(u.center[a] - u.width[a], u.center[a] + u.width[a], n);
    for (auto& d : d_[a]) d.resize(n);
    for (int k = 0; k < n; ++k) {
      auto p = u.profile(a, z_[a][k]);
      for (int o = 0; o < 3; ++o) d_[a][o][k] = p[o];
    }
  }
  g_[0].resize(n);
  g_[1].resize(n);
  for (int k = 0; k < n; ++k) {
    g_[0][k] = speed.gx(z_[0][k]);
    g_[1][k] = speed.gy(z_[1][k]);
  }
}

HyperbolicIntegrals::Sums HyperbolicIntegrals::at(double lambda) const {
  const int n = static_cast<int>(z_[0].size());
  // Per-axis weights, each normalized by its own largest exponent.
  std::array<std::vector<double>, 3> w;
  double log_scale = 0.0;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> ex(n);
    double h = (z_[a].back() - z_[a].front()) / (n - 1);
    double top = -1e300;
    for (int k = 0; k < n; ++k) {
      double z = z_[a][k];
      ex[k] = a < 2 ? (z - shape_.x0[a]) * (z - shape_.x0[a]) : -shape_.eta * z * z;
      top = std::max(top, ex[k]);
    }
    w[a].resize(n);
    for (int k = 0; k < n; ++k) {
      double tw = (k == 0 || k == n - 1) ? 0.5 * h : h;
      w[a][k] = tw * std::exp(2.0 * lambda * (ex[k] - top));
    }
    log_scale += 2.0 * lambda * top;
  }
  auto integral = [&](int a, const auto& f) {
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += w[a][k] * f(k);
    return s;
  };
  const auto& X = d_[0];
  const auto& Y = d_[1];
  const auto& Tt = d_[2];
  const auto& gx = g_[0];
  const auto& gy = g_[1];
  // Lu = T2 X0 Y0 - gx X2 gy Y0 T0 - gx X0 gy Y2 T0, as separable terms.
  auto fx = [&](int term, int k) {
    return term == 0 ? X[0][k] : term == 1 ? gx[k] * X[2][k] : gx[k] * X[0][k];
  };
  auto fy = [&](int term, int k) {
    return term == 0 ? Y[0][k] : term == 1 ? gy[k] * Y[0][k] : gy[k] * Y[2][k];
  };
  auto ft = [&](int term, int k) { return term == 0 ? Tt[2][k] : Tt[0][k]; };
  const double sign[3] = {1.0, -1.0, -1.0};
  double lhs = 0.0;
  for (int p = 0; p < 3; ++p)
    for (int q = p; q < 3; ++q) {
      double ix = integral(0, [&](int k) { return fx(p, k) * fx(q, k); });
      double iy = integral(1, [&](int k) { return fy(p, k) * fy(q, k); });
      double it = integral(2, [&](int k) { return ft(p, k) * ft(q, k); });
      lhs += (p == q ? 1.0 : 2.0) * sign[p] * sign[q] * ix * iy * it;
    }
  auto sq = [&](int a, int o) { return integral(a, [&](int k) { return d_[a][o][k] * d_[a][o][k]; }); };
  double x0 = sq(0, 0), x1 = sq(0, 1), y0 = sq(1, 0), y1 = sq(1, 1), t0 = sq(2, 0), t1 = sq(2, 1);
  const double a2 = u_.amplitude * u_.amplitude;
  Sums s;
  s.lhs = a2 * lhs;
  s.grad = a2 * (x1 * y0 * t0 + x0 * y1 * t0 + x0 * y0 * t1);
  s.zero = a2 * x0 * y0 * t0;
  s.log_scale = log_scale;
  return s;
}

TensorBump random_parabolic_bump(const ParabolicCwf& shape, Rng& rng) {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    TensorBump b;
    b.center = {rng.uniform(0.02, 0.38), rng.uniform(-0.8, 0.8)};
    b.width = {rng.uniform(0.02, 0.1), rng.uniform(0.05, 0.3)};
    b.amplitude = rng.uniform(0.5, 2.0);
    try {
      check_parabolic_support(shape, b);
      return b;
    } catch (const Error&) {
    }
  }
  throw Error("parabolic bump: admissible domain too small for the sampler");
}

TensorBump random_hyperbolic_bump(const HyperbolicCwf& shape, Rng& rng) {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    TensorBump b;
    b.center = {rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform(-1.0, 1.0)};
    b.width = {rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.3)};
    b.amplitude = rng.uniform(0.5, 2.0);
    try {
      check_hyperbolic_support(shape, b);
      return b;
    } catch (const Error&) {
    }
  }
  throw Error("hyperbolic bump: admissible domain too small for the sampler");
}

namespace {

EstimateReport make_report(double lambda, double lhs, double rhs, double log_scale) {
  EstimateReport r;
  r.lambda = lambda;
  r.lhs = lhs;
  r.rhs = rhs;
  r.log_scale = log_scale;
  r.ratio = rhs > 0.0 ? lhs / rhs : (lhs > 0.0 ? INFINITY : 1.0);
  r.holds = lhs >= rhs;
  return r;
}

EstimateReport parabolic_report(const ParabolicIntegrals::Sums& s, double lambda, double nu, double C) {
  double rhs = C * (lambda * nu * s.grad + std::pow(lambda, 3) * std::pow(nu, 4) * s.zero);
  return make_report(lambda, s.lhs, rhs, s.log_scale);
}

EstimateReport hyperbolic_report(const HyperbolicIntegrals::Sums& s, double lambda, double C) {
  double rhs = C * lambda * s.grad + std::pow(lambda, 3) * s.zero;
  return make_report(lambda, s.lhs, rhs, s.log_scale);
}

double parabolic_constant(const ParabolicIntegrals::Sums& s, double lambda, double nu) {
  return s.lhs / (lambda * nu * s.grad + std::pow(lambda, 3) * std::pow(nu, 4) * s.zero);
}

double hyperbolic_constant(const HyperbolicIntegrals::Sums& s, double lambda) {
  return (s.lhs - std::pow(lambda, 3) * s.zero) / (lambda * s.grad);
}

bool is_zero_bump(const TensorBump& u) { return u.amplitude == 0.0; }

}  // namespace

EstimateReport verify_parabolic_estimate(const SpaceTimeCoefficient& a, const TensorBump& u, const ParabolicCwf& cwf,
                                         double C) {
  check_parabolic_support(cwf, u);
  if (is_zero_bump(u)) return make_report(cwf.lambda, 0.0, 0.0, 0.0);
  ParabolicIntegrals in(cwf, a, u, cwf.lambda);
  return parabolic_report(in.at(cwf.lambda), cwf.lambda, cwf.nu, C);
}

ScalarField sample_speed(const SeparableSpeed& speed, const Grid& g) {
  ScalarField c(g);
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i) c(i, j) = std::sqrt(speed.c2(g.x(i), g.y(j)));
  return c;
}

std::vector<std::size_t> speed_condition_violations(const ScalarField& c, std::array<double, 2> x0, double radius,
                                                    double tol) {
  const Grid& g = c.grid;
  if (g.dims != 2) throw Error("speed condition: expects a 2D grid");
  ScalarField inv2(g);
  for (std::size_t k = 0; k < g.size(); ++k) inv2.v[k] = 1.0 / (c.v[k] * c.v[k]);
  auto grad = gradient(inv2);
  std::vector<std::size_t> bad;
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i) {
      double x = g.x(i), y = g.y(j);
      if (x * x + y * y > radius * radius) continue;
      double dot = (x - x0[0]) * grad[0](i, j) + (y - x0[1]) * grad[1](i, j);
      if (dot < -tol) bad.push_back(g.index(i, j));
    }
  return bad;
}

EstimateReport verify_hyperbolic_estimate(const SeparableSpeed& speed, const TensorBump& u, const HyperbolicCwf& cwf,
                                          double C) {
  check_hyperbolic_support(cwf, u);
  const double r = cwf.radius;
  Grid g = Grid::rect(-r, r, 201, -r, r, 201);
  auto bad = speed_condition_violations(sample_speed(speed, g), cwf.x0, r);
  if (!bad.empty()) {
    std::string msg = "hyperbolic estimate: speed condition (x - x0).grad(c^-2) >= 0 violated at " +
                      std::to_string(bad.size()) + " nodes, first at";
    for (std::size_t k = 0; k < std::min<std::size_t>(bad.size(), 3); ++k) {
      char buf[64];
      std::snprintf(buf, sizeof buf, " (%.4g, %.4g)", g.x(static_cast<int>(bad[k] % g.n[0])),
                    g.y(static_cast<int>(bad[k] / g.n[0])));
      msg += buf;
    }
    throw Error(msg);
  }
  if (is_zero_bump(u)) return make_report(cwf.lambda, 0.0, 0.0, 0.0);
  HyperbolicIntegrals in(cwf, speed, u);
  return hyperbolic_report(in.at(cwf.lambda), cwf.lambda, C);
}

Calibration calibrate(const std::vector<std::vector<double>>& c_values, const std::vector<double>& sweep) {
  Calibration cal;
  cal.sweep = sweep;
  const std::size_t m = sweep.size();
  cal.min_constant.assign(m, INFINITY);
  for (const auto& row : c_values)
    for (std::size_t k = 0; k < m; ++k) cal.min_constant[k] = std::min(cal.min_constant[k], row[k]);
  // Smallest k from which every row increases strictly to the end.
  std::size_t start = m - 1;
  while (start > 0) {
    bool ok = true;
    for (const auto& row : c_values) ok = ok && row[start] > row[start - 1];
    if (!ok) break;
    --start;
  }
  if (start + 1 < m && cal.min_constant[start] > 0.0) {
    cal.found = true;
    cal.lambda_star = sweep[start];
    cal.C = cal.min_constant[start];
  }
  return cal;
}

std::vector<double> geometric_sweep(double lo, double hi, int count) {
  std::vector<double> s(count);
  for (int k = 0; k < count; ++k) s[k] = lo * std::pow(hi / lo, static_cast<double>(k) / (count - 1));
  return s;
}

nlohmann::ordered_json to_json(const SuiteResult& r) {
  nlohmann::ordered_json j;
  j["calibration"]["found"] = r.calibration.found;
  j["calibration"]["lambda_star"] = r.calibration.lambda_star;
  j["calibration"]["C"] = r.calibration.C;
  j["calibration"]["sweep"] = r.calibration.sweep;
  j["calibration"]["min_constant"] = r.calibration.min_constant;
  j["check_lambdas"] = r.check_lambdas;
  j["all_hold_at_2x"] = r.all_hold_at_2x;
  j["ratio_increasing"] = r.ratio_increasing;
  nlohmann::ordered_json reports = nlohmann::ordered_json::array();
  for (const auto& bump : r.held_out) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (const auto& rep : bump) row.push_back(to_json(rep));
    reports.push_back(row);
  }
  j["held_out"] = reports;
  return j;
}

namespace {

// Held-out evaluation at lambda*, 2 lambda* and 4 lambda*.
template <class Reports>
void finish_suite(SuiteResult& res, int held_out, Reports reports_at) {
  const auto& cal = res.calibration;
  if (!cal.found) return;
  res.check_lambdas = {cal.lambda_star, 2.0 * cal.lambda_star, 4.0 * cal.lambda_star};
  res.held_out.assign(held_out, {});
  std::vector<int> hold(held_out, 1), increasing(held_out, 1);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < held_out; ++i) {
    std::vector<EstimateReport> chosen = reports_at(i, res.check_lambdas);
    for (std::size_t k = 1; k < chosen.size(); ++k)
      if (!(chosen[k].ratio > chosen[k - 1].ratio)) increasing[i] = 0;
    if (!chosen[1].holds) hold[i] = 0;
    res.held_out[i] = chosen;
  }
  res.all_hold_at_2x = std::all_of(hold.begin(), hold.end(), [](int v) { return v == 1; });
  res.ratio_increasing = std::all_of(increasing.begin(), increasing.end(), [](int v) { return v == 1; });
}

}  // namespace

SuiteResult parabolic_suite(const SpaceTimeCoefficient& a, const ParabolicCwf& shape, const std::vector<double>& sweep,
                            int train, int held_out, std::uint64_t seed) {
  Rng root(seed);
  Rng train_rng = root.child("train"), test_rng = root.child("held-out");
  std::vector<TensorBump> train_bumps, test_bumps;
  for (int i = 0; i < train; ++i) train_bumps.push_back(random_parabolic_bump(shape, train_rng));
  for (int i = 0; i < held_out; ++i) test_bumps.push_back(random_parabolic_bump(shape, test_rng));
  std::vector<std::vector<double>> cvals(train, std::vector<double>(sweep.size()));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < train; ++i) {
    ParabolicIntegrals in(shape, a, train_bumps[i], sweep.back());
    for (std::size_t k = 0; k < sweep.size(); ++k) cvals[i][k] = parabolic_constant(in.at(sweep[k]), sweep[k], shape.nu);
  }
  SuiteResult res;
  res.calibration = calibrate(cvals, sweep);
  const double C = res.calibration.C;
  const double lam_max = std::max(sweep.back(), 4.0 * res.calibration.lambda_star);
  finish_suite(res, held_out, [&](int i, const std::vector<double>& lambdas) {
    ParabolicIntegrals in(shape, a, test_bumps[i], lam_max);
    std::vector<EstimateReport> out;
    for (double l : lambdas) out.push_back(parabolic_report(in.at(l), l, shape.nu, C));
    return out;
  });
  return res;
}

SuiteResult hyperbolic_suite(const SeparableSpeed& speed, const HyperbolicCwf& shape, const std::vector<double>& sweep,
                             int train, int held_out, std::uint64_t seed, int nodes_per_axis) {
  {
    const double r = shape.radius;
    Grid g = Grid::rect(-r, r, 201, -r, r, 201);
    if (!speed_condition_violations(sample_speed(speed, g), shape.x0, r).empty())
      throw Error("hyperbolic suite: speed violates (x - x0).grad(c^-2) >= 0");
  }
  Rng root(seed);
  Rng train_rng = root.child("train"), test_rng = root.child("held-out");
  std::vector<TensorBump> train_bumps, test_bumps;
  for (int i = 0; i < train; ++i) train_bumps.push_back(random_hyperbolic_bump(shape, train_rng));
  for (int i = 0; i < held_out; ++i) test_bumps.push_back(random_hyperbolic_bump(shape, test_rng));
  std::vector<std::vector<double>> cvals(train, std::vector<double>(sweep.size()));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < train; ++i) {
    HyperbolicIntegrals in(shape, speed, train_bumps[i], nodes_per_axis);
    for (std::size_t k = 0; k < sweep.size(); ++k) cvals[i][k] = hyperbolic_constant(in.at(sweep[k]), sweep[k]);
  }
  SuiteResult res;
  res.calibration = calibrate(cvals, sweep);
  const double C = res.calibration.C;
  finish_suite(res, held_out, [&](int i, const std::vector<double>& lambdas) {
    HyperbolicIntegrals in(shape, speed, test_bumps[i], nodes_per_axis);
    std::vector<EstimateReport> out;
    for (double l : lambdas) out.push_back(hyperbolic_report(in.at(l), l, C));
    return out;
  });
  return res;
}

nlohmann::ordered_json to_json(const VolterraReport& r) {
  nlohmann::ordered_json j;
  j["lambda"] = r.lambda;
  j["lhs"] = r.lhs;
  j["rhs"] = r.rhs;
  j["ratio"] = r.ratio;
  j["damping"] = r.damping;
  j["holds"] = r.holds;
  return j;
}

VolterraReport volterra_weight_check(const std::vector<double>& g, double a, const std::function<double(double)>& phi,
                                     double lambda, double b) {
  if (g.size() < 3 || g.size() % 2 == 0) throw Error("volterra: need an odd number of samples on [-a, a]");
  if (!(a > 0.0) || !(b > 0.0) || !(lambda > 0.0)) throw Error("volterra: a, b and lambda must be positive");
  // phi' <= -b on the range of t^2 (and on [0, a] as stated for phi).
  const double zmax = std::max(a, a * a);
  const int probes = 2001;
  const double dz = 1e-6 * zmax;
  for (int k = 0; k < probes; ++k) {
    double z = std::clamp(zmax * k / (probes - 1), dz, zmax - dz);
    double d = (phi(z + dz) - phi(z - dz)) / (2.0 * dz);
    if (d > -b + 1e-6 * std::max(1.0, b)) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "volterra: weight slope %.6g exceeds -b = %.6g at z = %.6g", d, -b, z);
      throw Error(buf);
    }
  }
  const int n = static_cast<int>(g.size());
  const int mid = (n - 1) / 2;
  const double h = 2.0 * a / (n - 1);
  std::vector<double> inner(n, 0.0);
  for (int k = mid + 1; k < n; ++k) inner[k] = inner[k - 1] + 0.5 * h * (g[k - 1] + g[k]);
  for (int k = mid - 1; k >= 0; --k) inner[k] = inner[k + 1] - 0.5 * h * (g[k + 1] + g[k]);
  const double top = phi(0.0);
  double lhs = 0.0, g2 = 0.0;
  for (int k = 0; k < n; ++k) {
    double t = -a + k * h;
    double w = ((k == 0 || k == n - 1) ? 0.5 : 1.0) * h * std::exp(2.0 * lambda * (phi(t * t) - top));
    lhs += w * inner[k] * inner[k];
    g2 += w * g[k] * g[k];
  }
  VolterraReport r;
  r.lambda = lambda;
  r.lhs = lhs;
  r.weighted_g2 = g2;
  r.rhs = g2 / (4.0 * lambda * b);
  r.ratio = r.rhs > 0.0 ? lhs / r.rhs : (lhs > 0.0 ? INFINITY : 0.0);
  r.damping = g2 > 0.0 ? lhs / g2 : 0.0;
  r.holds = lhs <= r.rhs * (1.0 + kVolterraQuadratureSlack);
  return r;
}

std::vector<double> random_piecewise_smooth(int samples, double a, Rng& rng) {
  double offset = rng.uniform(-1.0, 1.0);
  double amp[4], phase[4];
  for (int m = 0; m < 4; ++m) {
    amp[m] = rng.uniform(-1.0, 1.0);
    phase[m] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  double jump_at = rng.uniform(-a, a);
  double jump = rng.uniform(-1.0, 1.0);
  std::vector<double> g(samples);
  for (int k = 0; k < samples; ++k) {
    double t = -a + 2.0 * a * k / (samples - 1);
    double v = offset;
    for (int m = 0; m < 4; ++m) v += amp[m] * std::sin((m + 1) * std::numbers::pi * t / a + phase[m]);
    if (t > jump_at) v += jump;
    g[k] = v;
  }
  return g;
}

}  // namespace bkinv
