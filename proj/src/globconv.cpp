#include "bkinv/globconv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "bkinv/log.hpp"
#include "bkinv/sparse.hpp"

namespace bkinv {

PseudoFreqPartition GlobconvConfig::partition() const {
  PseudoFreqPartition p;
  p.s_min = s_min;
  p.s_max = s_max;
  p.N = N;
  p.fine = fine;
  return p;
}

void GlobconvConfig::validate() const {
  partition().validate();
  if (!(d > 2.0)) throw Error("globconv: the bound d is required and must exceed 2");
  if (m < 1) throw Error("globconv: m must be at least 1");
  if (!(eps_source > 0.0)) throw Error("globconv: eps_source must be positive");
  if (!(stop_tol_c > 0.0) || !(stop_tol_residual >= 0.0)) throw Error("globconv: stopping tolerances must be positive");
  if (picard_sweeps < 1) throw Error("globconv: picard_sweeps must be at least 1");
  if (lambda * partition().h() < 1.0) throw Error("globconv: lambda h must be at least 1");
}

LayerCoefficients derive_layer_coefficients(const PseudoFreqPartition& p, double lambda, int n, int intervals) {
  p.validate();
  if (n < 1 || n > p.N) throw Error("layer coefficients: n out of range");
  const double h = p.h();
  if (lambda * h < 1.0) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "layer coefficients: lambda h = %.4g must be at least 1", lambda * h);
    throw Error(buf);
  }
  if (intervals < 2 || intervals % 2) throw Error("layer coefficients: Simpson needs an even interval count");
  const double top = p.s(n - 1), bottom = p.s(n);
  const double step = (top - bottom) / intervals;
  double mass = 0, a1 = 0, a2 = 0, kappa = 0;
  for (int k = 0; k <= intervals; ++k) {
    const double wk = (k == 0 || k == intervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    const double s = bottom + k * step;
    const double rho = top - s;
    const double w = wk * std::exp(-lambda * rho);
    mass += w;
    a1 += w * (2.0 * s * s - 4.0 * s * rho);
    a2 += w * (2.0 * s);
    kappa += w * (2.0 * s * rho * rho - 2.0 * s * s * rho);
  }
  LayerCoefficients c;
  c.a1 = a1 / mass;
  c.a2 = a2 / mass;
  c.kappa = kappa / mass;
  c.weight_mass = mass * step / 3.0;
  c.drop_gradient_term = std::abs(c.kappa) < 1e-3 * std::max(std::abs(c.a1), std::abs(c.a2));
  return c;
}

std::vector<double> pseudo_frequency_samples(const PseudoFreqPartition& p) {
  p.validate();
  const double ds = p.fine_step();
  const int count = p.N * p.fine + 3;
  std::vector<double> s(count);
  for (int k = 0; k < count; ++k) s[k] = p.s_min + (k - 1) * ds;
  return s;
}

namespace {

int sample_index(const std::vector<double>& s, double at) {
  const double ds = s[1] - s[0];
  const double pos = (at - s.front()) / ds;
  const long k = std::lround(pos);
  if (std::abs(pos - k) > 1e-6 || k < 0 || k >= static_cast<long>(s.size()))
    throw Error("pseudo-frequency data: s is not a sample of the fine grid");
  return static_cast<int>(k);
}

void fill_psi(BoundaryPseudoFreq& d) {
  const std::size_t ns = d.s.size(), nb = d.nodes();
  if (ns < 3) throw Error("pseudo-frequency data: need at least three s samples");
  const double ds = d.s[1] - d.s[0];
  d.psi.assign(ns, std::vector<double>(nb));
  for (std::size_t k = 0; k < ns; ++k) {
    const std::size_t lo = k == 0 ? 0 : (k == ns - 1 ? ns - 3 : k - 1);
    for (std::size_t b = 0; b < nb; ++b) {
      if (k == 0 || k == ns - 1) {
        // One-sided second-order difference at the two extra samples.
        double l0 = std::log(d.phi[lo][b]), l1 = std::log(d.phi[lo + 1][b]), l2 = std::log(d.phi[lo + 2][b]);
        double dl = k == 0 ? (-3 * l0 + 4 * l1 - l2) / (2 * ds) : (l0 - 4 * l1 + 3 * l2) / (2 * ds);
        double s = d.s[k];
        d.psi[k][b] = dl / (s * s) - 2.0 * std::log(d.phi[k][b]) / (s * s * s);
      } else {
        d.psi[k][b] = psi_from_phi(d.phi[k - 1][b], d.phi[k][b], d.phi[k + 1][b], d.s[k], ds);
      }
    }
  }
}

}  // namespace

std::vector<double> BoundaryPseudoFreq::psi_at(double at) const {
  const double ds = s[1] - s[0];
  double pos = std::clamp((at - s.front()) / ds, 0.0, static_cast<double>(s.size() - 1));
  std::size_t k = std::min(static_cast<std::size_t>(pos), s.size() - 2);
  double w = pos - k;
  std::vector<double> out(nodes());
  for (std::size_t b = 0; b < out.size(); ++b) out[b] = (1 - w) * psi[k][b] + w * psi[k + 1][b];
  return out;
}

std::vector<double> BoundaryPseudoFreq::phi_at(double at) const { return phi[sample_index(s, at)]; }

std::vector<double> BoundaryPseudoFreq::psi_average(double a, double b) const {
  const int ka = sample_index(s, a), kb = sample_index(s, b);
  if (kb <= ka) throw Error("pseudo-frequency data: empty averaging interval");
  std::vector<double> out(nodes(), 0.0);
  for (int k = ka; k <= kb; ++k) {
    double w = (k == ka || k == kb) ? 0.5 : 1.0;
    for (std::size_t n = 0; n < out.size(); ++n) out[n] += w * psi[k][n];
  }
  for (double& v : out) v /= (kb - ka);
  return out;
}

BoundaryPseudoFreq pseudo_frequency_data(const BoundaryTrace& trace, const PseudoFreqPartition& p) {
  BoundaryPseudoFreq d;
  d.s = pseudo_frequency_samples(p);
  d.phi.reserve(d.s.size());
  for (double s : d.s) {
    auto phi = laplace_transform(trace, s);
    for (double v : phi)
      if (!(v > 0.0)) throw Error("pseudo-frequency data: non-positive transformed trace");
    d.phi.push_back(std::move(phi));
  }
  fill_psi(d);
  return d;
}

BoundaryPseudoFreq pseudo_frequency_data(const std::vector<double>& s, const std::vector<std::vector<double>>& phi) {
  if (s.size() != phi.size()) throw Error("pseudo-frequency data: s and phi sizes differ");
  BoundaryPseudoFreq d;
  d.s = s;
  d.phi = phi;
  for (const auto& row : phi)
    for (double v : row)
      if (!(v > 0.0)) throw Error("pseudo-frequency data: non-positive transformed data");
  fill_psi(d);
  return d;
}

std::vector<double> boundary_values(const ScalarField& f) {
  const Grid& g = f.grid;
  auto nodes = SubBox::whole(g).boundary_nodes(g);
  std::vector<double> out(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) out[k] = f.v[nodes[k]];
  return out;
}

void set_boundary_values(ScalarField& f, const std::vector<double>& boundary) {
  const Grid& g = f.grid;
  auto nodes = SubBox::whole(g).boundary_nodes(g);
  if (nodes.size() != boundary.size()) throw Error("boundary values: count does not match the domain edge");
  for (std::size_t k = 0; k < nodes.size(); ++k) f.v[nodes[k]] = boundary[k];
}

ScalarField tail_init(const std::vector<double>& psi_at_smax, const Grid& domain, double s_max) {
  ScalarField edge(domain);
  std::vector<double> p(psi_at_smax.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = -s_max * s_max * psi_at_smax[k];
  set_boundary_values(edge, p);
  ScalarField v = harmonic_solve(edge);
  for (double& x : v.v) x /= s_max;
  return v;
}

namespace {

// Lap q + b . grad q = rhs, Dirichlet edge values, central differences.
ScalarField convection_diffusion(const std::vector<ScalarField>& b, const ScalarField& rhs,
                                 const std::vector<double>& edge) {
  const Grid& g = rhs.grid;
  ScalarField q(g);
  set_boundary_values(q, edge);
  std::vector<int> map(g.size(), -1);
  int unknowns = 0;
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i)
      if (!g.on_boundary(i, j)) map[g.index(i, j)] = unknowns++;
  std::vector<Triplet> t;
  std::vector<double> f(unknowns);
  t.reserve(static_cast<std::size_t>(unknowns) * (1 + 2 * g.dims));
  for (int j = 0; j < g.n[1]; ++j) {
    for (int i = 0; i < g.n[0]; ++i) {
      const int r = map[g.index(i, j)];
      if (r < 0) continue;
      // Rows of -(Lap + b . grad) so the diagonal is positive.
      double diag = 0.0;
      double rhs_r = -rhs(i, j);
      auto couple = [&](int ii, int jj, double coef) {
        int col = map[g.index(ii, jj)];
        if (col >= 0)
          t.push_back({r, col, -coef});
        else
          rhs_r += coef * q(ii, jj);
      };
      for (int axis = 0; axis < g.dims; ++axis) {
        const double h = g.h[axis];
        const double bb = b[axis](i, j);
        diag += 2.0 / (h * h);
        int di = axis == 0 ? 1 : 0, dj = axis == 1 ? 1 : 0;
        couple(i + di, j + dj, 1.0 / (h * h) + bb / (2.0 * h));
        couple(i - di, j - dj, 1.0 / (h * h) - bb / (2.0 * h));
      }
      t.push_back({r, r, diag});
      f[r] = rhs_r;
    }
  }
  if (unknowns == 0) return q;
  Csr a = Csr::from_triplets(unknowns, unknowns, std::move(t));
  std::vector<double> x;
  SolveOptions so;
  so.tol = 1e-12;
  sparse_solve(a, f, x, false, so);
  for (int j = 0; j < g.n[1]; ++j)
    for (int i = 0; i < g.n[0]; ++i) {
      int r = map[g.index(i, j)];
      if (r >= 0) q(i, j) = x[r];
    }
  return q;
}

double rel_change(const ScalarField& a, const ScalarField& b) {
  double num = 0, den = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num += (a.v[k] - b.v[k]) * (a.v[k] - b.v[k]);
    den += a.v[k] * a.v[k];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace

ScalarField layer_solve(const LayerState& state, const LayerCoefficients& coef, const std::vector<double>& boundary,
                        const LayerSolveOptions& opt) {
  const Grid& g = state.tail.grid;
  const double h = state.partition.h();
  // g = grad V - h sum_j grad q_j
  std::vector<ScalarField> gv = gradient(state.tail);
  for (const auto& q : state.layers) {
    auto gq = gradient(q);
    for (int a = 0; a < g.dims; ++a)
      for (std::size_t k = 0; k < g.size(); ++k) gv[a].v[k] -= h * gq[a].v[k];
  }
  ScalarField rhs(g);
  for (std::size_t k = 0; k < g.size(); ++k) {
    double s = 0;
    for (int a = 0; a < g.dims; ++a) s += gv[a].v[k] * gv[a].v[k];
    rhs.v[k] = -coef.a2 * s;
  }
  const int sweeps = coef.drop_gradient_term ? 1 : std::max(1, opt.picard_sweeps);
  ScalarField q, prev;
  double change = 0.0;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    std::vector<ScalarField> b(g.dims, ScalarField(g));
    std::vector<ScalarField> gq;
    if (sweep > 0) gq = gradient(q);
    for (int a = 0; a < g.dims; ++a)
      for (std::size_t k = 0; k < g.size(); ++k)
        b[a].v[k] = coef.a1 * gv[a].v[k] + (sweep > 0 ? coef.kappa * gq[a].v[k] : 0.0);
    prev = q;
    q = convection_diffusion(b, rhs, boundary);
    if (sweep > 0) change = rel_change(q, prev);
  }
  if (opt.last_sweep_change) *opt.last_sweep_change = change;
  return q;
}

ScalarField assemble_v(const LayerState& state, int n, const ScalarField* current) {
  ScalarField v = state.tail;
  const double h = state.partition.h();
  const int stored = std::min<int>(n, static_cast<int>(state.layers.size()));
  for (int j = 0; j < stored; ++j)
    for (std::size_t k = 0; k < v.size(); ++k) v.v[k] -= h * state.layers[j].v[k];
  if (current && n > stored)
    for (std::size_t k = 0; k < v.size(); ++k) v.v[k] -= h * current->v[k];
  return v;
}

CoefficientModel reconstruct_c(const ScalarField& v, double s, double d) {
  const Grid& g = v.grid;
  ScalarField lap = laplacian(v);
  ScalarField g2 = grad_squared(v);
  CoefficientModel m;
  m.d = d;
  m.c = ScalarField(g);
  for (std::size_t k = 0; k < g.size(); ++k) m.c.v[k] = lap.v[k] + s * s * g2.v[k];
  m.clamp();
  ScalarField smooth = m.c;
  for (int j = 0; j < g.n[1]; ++j) {
    for (int i = 0; i < g.n[0]; ++i) {
      if (g.on_boundary(i, j)) continue;
      double sum = 2.0 * g.dims * m.c(i, j), weight = 2.0 * g.dims;
      sum += m.c(i - 1, j) + m.c(i + 1, j);
      weight += 2.0;
      if (g.dims == 2) {
        sum += m.c(i, j - 1) + m.c(i, j + 1);
        weight += 2.0;
      }
      smooth(i, j) = sum / weight;
    }
  }
  m.c = smooth;
  m.reset_edges();
  return m;
}

CoefficientModel embed(const CoefficientModel& inner, const GlobconvSetup& setup) {
  CoefficientModel out = CoefficientModel::background(setup.grid, inner.d);
  const SubBox& box = setup.omega;
  if (inner.c.grid.n[0] != box.count(0) || inner.c.grid.n[1] != box.count(1))
    throw Error("embed: coefficient grid does not match the measurement box");
  for (int j = 0; j < box.count(1); ++j)
    for (int i = 0; i < box.count(0); ++i) out.c(box.first[0] + i, box.first[1] + j) = inner.c(i, j);
  return out;
}

namespace {

GlobconvResult run_loop(const BoundaryPseudoFreq& data, const GlobconvSetup& setup, const GlobconvConfig& cfg,
                        const ScalarField* initial_tail) {
  const PseudoFreqPartition part = cfg.partition();
  const Grid domain = setup.omega.as_grid(setup.grid);
  const double s_max = part.s_max;
  const std::vector<double> phi_top = data.phi_at(s_max);
  if (phi_top.size() != SubBox::whole(domain).boundary_nodes(domain).size())
    throw Error("globconv: data nodes do not match the measurement box boundary");
  double phi_norm = 0;
  for (double v : phi_top) phi_norm += v * v;
  phi_norm = std::sqrt(phi_norm);

  LayerState state;
  state.partition = part;
  if (initial_tail) {
    if (!initial_tail->grid.same_shape(domain)) throw Error("globconv: initial tail grid does not match the domain");
    state.tail = *initial_tail;
  } else {
    state.tail = tail_init(data.psi_at(s_max), domain, s_max);
  }
  state.c = CoefficientModel::background(domain, cfg.d);

  MollifiedSource src = setup.source;
  GlobconvResult result;
  std::vector<double> outer_residual;
  ScalarField prev_c;
  for (int n = 1; n <= part.N; ++n) {
    state.n = n;
    const LayerCoefficients coef = derive_layer_coefficients(part, cfg.lambda, n);
    const std::vector<double> edge = data.psi_average(part.s(n), part.s(n - 1));
    ScalarField q;
    outer_residual.push_back(0.0);
    for (int i = 1; i <= cfg.m; ++i) {
      state.i = i;
      char where[48];
      std::snprintf(where, sizeof where, "globconv (n=%d, i=%d): ", n, i);
      try {
        double picard = 0.0;
        LayerSolveOptions lo;
        lo.picard_sweeps = cfg.picard_sweeps;
        lo.last_sweep_change = &picard;
        q = layer_solve(state, coef, edge, lo);
        result.picard_change = std::max(result.picard_change, picard);
        ScalarField v = assemble_v(state, n, &q);
        CoefficientModel c = reconstruct_c(v, part.s(n), cfg.d);

        ScalarField w = elliptic_solve(embed(c, setup), s_max, src);
        ScalarField w_dom = restrict_to(w, setup.omega);
        state.tail = compute_v(w_dom, s_max);
        std::vector<double> wb = boundary_values(w_dom);
        double res = 0;
        for (std::size_t k = 0; k < wb.size(); ++k) res += (wb[k] - phi_top[k]) * (wb[k] - phi_top[k]);
        res = std::sqrt(res) / phi_norm;
        outer_residual.back() = res;

        GlobconvLogRow row;
        row.n = n;
        row.i = i;
        // No previous iterate counts as a full change.
        row.c_change = prev_c.v.empty() ? 1.0 : rel_change(c.c, prev_c);
        row.boundary_residual = res;
        row.c_min = *std::min_element(c.c.v.begin(), c.c.v.end());
        row.c_max = *std::max_element(c.c.v.begin(), c.c.v.end());
        result.log.push_back(row);
        prev_c = c.c;
        state.c = c;

        const std::size_t k = outer_residual.size();
        const double keep = 1.0 - cfg.stop_tol_residual;
        bool stalled = k >= 3 && outer_residual[k - 1] >= keep * outer_residual[k - 2] &&
                       outer_residual[k - 2] >= keep * outer_residual[k - 3];
        if (row.c_change < cfg.stop_tol_c && stalled) {
          result.stopped = true;
          result.stop_n = n;
          result.stop_i = i;
          result.c = state.c;
          return result;
        }
      } catch (const Error& e) {
        throw Error(std::string(where) + e.what());
      }
    }
    state.layers.push_back(q);
  }
  result.c = state.c;
  return result;
}

}  // namespace

GlobconvResult run_reconstruction(const BoundaryPseudoFreq& data, const GlobconvSetup& setup,
                                  const GlobconvConfig& config, const ScalarField* initial_tail) {
  config.validate();
  return run_loop(data, setup, config, initial_tail);
}

GlobconvResult run_reconstruction(const BoundaryTrace& g, const GlobconvSetup& setup, const GlobconvConfig& config,
                                  const ScalarField* initial_tail) {
  config.validate();
  return run_loop(pseudo_frequency_data(g, config.partition()), setup, config, initial_tail);
}

void write_globconv_log(const std::vector<GlobconvLogRow>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("globconv: cannot write " + path);
  out << "n,i,c_change,boundary_residual,c_min,c_max\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.10e,%.10e,%.10e,%.10e\n", r.n, r.i, r.c_change, r.boundary_residual,
                  r.c_min, r.c_max);
    out << buf;
  }
}

}  // namespace bkinv
