#include "bkinv/experiments.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "bkinv/carleman.hpp"
#include "bkinv/globconv.hpp"
#include "bkinv/inverse_source.hpp"
#include "bkinv/log.hpp"
#include "bkinv/transforms.hpp"

#ifndef BKINV_BUILD_ID
#define BKINV_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;

namespace bkinv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Validation helpers

struct Problems {
  std::vector<std::string> keys;
  std::vector<std::string> msgs;
  void add(const std::string& key, const std::string& msg) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    msgs.push_back(key + ": " + msg);
  }
  void raise(const std::string& what) const {
    if (msgs.empty()) return;
    std::string m = what + " is invalid:";
    for (const auto& s : msgs) m += "\n  " + s;
    throw ConfigError(m, keys);
  }
};

// Reads one JSON object, fills defaults into out(), and reports bad or
// unknown keys under `path`.
class Block {
 public:
  Block(const Json* in, std::string path, Problems& pr) : in_(in), path_(std::move(path)), pr_(pr) {
    if (in_ && !in_->is_object()) {
      pr_.add(path_, "must be an object");
      in_ = nullptr;
    }
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  const Json* get(const std::string& k) {
    known_.insert(k);
    if (!in_ || !in_->contains(k)) return nullptr;
    return &(*in_)[k];
  }

  double number(const std::string& k, double def, double lo = -kInf, double hi = kInf) {
    const Json* v = get(k);
    double x = def;
    if (v) {
      if (!v->is_number()) {
        pr_.add(key(k), "must be a number");
      } else {
        x = v->get<double>();
        if (!(x >= lo && x <= hi)) pr_.add(key(k), "must lie in [" + fmt("%g", lo) + ", " + fmt("%g", hi) + "]");
      }
    }
    out_[k] = x;
    return x;
  }

  double required_number(const std::string& k, double lo = -kInf, double hi = kInf) {
    if (!get(k)) {
      pr_.add(key(k), "is required");
      out_[k] = nullptr;
      return std::numeric_limits<double>::quiet_NaN();
    }
    return number(k, 0.0, lo, hi);
  }

  int integer(const std::string& k, int def, int lo, int hi) {
    const Json* v = get(k);
    int x = def;
    if (v) {
      if (!v->is_number_integer()) {
        pr_.add(key(k), "must be an integer");
      } else {
        long long y = v->get<long long>();
        if (y < lo || y > hi)
          pr_.add(key(k), "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        else
          x = static_cast<int>(y);
      }
    }
    out_[k] = x;
    return x;
  }

  std::string choice(const std::string& k, const std::string& def, const std::vector<std::string>& allowed) {
    const Json* v = get(k);
    std::string x = def;
    if (v) {
      if (!v->is_string() || std::find(allowed.begin(), allowed.end(), v->get<std::string>()) == allowed.end()) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        pr_.add(key(k), "must be one of " + list);
      } else {
        x = v->get<std::string>();
      }
    }
    out_[k] = x;
    return x;
  }

  std::vector<double> numbers(const std::string& k, std::vector<double> def, double lo, double hi,
                              std::size_t min_count = 1) {
    const Json* v = get(k);
    if (v) {
      bool ok = v->is_array() && v->size() >= min_count;
      std::vector<double> x;
      if (ok)
        for (const auto& e : *v) {
          if (!e.is_number() || !(e.get<double>() >= lo && e.get<double>() <= hi)) ok = false;
          if (ok) x.push_back(e.get<double>());
        }
      if (ok)
        def = x;
      else
        pr_.add(key(k), "must be an array of at least " + std::to_string(min_count) + " numbers in [" +
                            fmt("%g", lo) + ", " + fmt("%g", hi) + "]");
    }
    out_[k] = def;
    return def;
  }

  void finish() {
    if (!in_) return;
    for (auto it = in_->begin(); it != in_->end(); ++it)
      if (!known_.count(it.key())) pr_.add(key(it.key()), "unknown key");
  }

  Json& out() { return out_; }
  bool present() const { return in_ != nullptr; }

 private:
  const Json* in_;
  std::string path_;
  Problems& pr_;
  Json out_ = Json::object();
  std::set<std::string> known_;
};

// ---------------------------------------------------------------------------
// Truth specs

const std::vector<std::string> kKindNames = {"globconv", "qrm-rate", "tat", "parabolic-route", "verify-carleman",
                                             "verify-volterra"};

bool parse_kind(const std::string& s, ExperimentKind& k) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (s == kKindNames[i]) {
      k = static_cast<ExperimentKind>(i);
      return true;
    }
  return false;
}

bool has_truth(ExperimentKind k) {
  return k == ExperimentKind::Globconv || k == ExperimentKind::Tat || k == ExperimentKind::ParabolicRoute;
}

Json validate_bumps(Block& b, const std::string& k, double lo, double hi, Problems& pr) {
  const Json* v = b.get(k);
  Json out = Json::array();
  if (!v) {
    pr.add(b.key(k), "is required");
    b.out()[k] = out;
    return out;
  }
  if (!v->is_array() || v->empty()) {
    pr.add(b.key(k), "must be a non-empty array");
    b.out()[k] = out;
    return out;
  }
  for (std::size_t i = 0; i < v->size(); ++i) {
    Block e(&(*v)[i], b.key(k) + "[" + std::to_string(i) + "]", pr);
    e.number("center", 0.0, lo, hi);
    e.number("width", 0.1, 1e-6, hi - lo);
    e.number("amplitude", 1.0);
    e.finish();
    out.push_back(e.out());
  }
  b.out()[k] = out;
  return out;
}

Json validate_truth_into(const Json& truth, ExperimentKind kind, const std::string& path, Problems& pr) {
  Block b(&truth, path, pr);
  std::string k = b.choice("kind", kind_name(kind), {kind_name(kind)});
  (void)k;
  if (kind == ExperimentKind::Globconv) {
    double h = b.number("h", 0.005, 1e-4, 0.1);
    std::vector<double> om = b.numbers("omega", {0.0, 1.0}, -100, 100, 2);
    double sx = b.number("source_x", -0.4, -100, 100);
    b.number("source_cells", 3.0, 1.0, 20.0);
    b.number("T", 30.0, 0.1, 200.0);
    double d = b.number("d", 5.0, 1.0, 1e3);
    if (om.size() != 2 || !(om[1] > om[0] + 4 * h)) {
      pr.add(b.key("omega"), "must be [lo, hi] with hi > lo");
      om = {0.0, 1.0};
    }
    if (sx >= om[0] && sx <= om[1]) pr.add(b.key("source_x"), "must lie outside omega");
    Json incs = Json::array();
    if (const Json* v = b.get("inclusions")) {
      if (!v->is_array()) {
        pr.add(b.key("inclusions"), "must be an array");
      } else {
        for (std::size_t i = 0; i < v->size(); ++i) {
          Block e(&(*v)[i], b.key("inclusions") + "[" + std::to_string(i) + "]", pr);
          double c = e.number("center", 0.5, om[0], om[1]);
          double r = e.number("radius", 0.1, h, om[1] - om[0]);
          e.number("value", 2.0, 1.0, d);
          if (c - r <= om[0] || c + r >= om[1]) pr.add(e.key("radius"), "inclusion must stay inside omega");
          e.finish();
          incs.push_back(e.out());
        }
      }
    }
    b.out()["inclusions"] = incs;
  } else if (kind == ExperimentKind::Tat) {
    b.integer("forward_nodes", 401, 21, 20001);
    b.number("T", 1.5, 0.1, 20.0);
    validate_bumps(b, "bumps", -1.0, 1.0, pr);
  } else {
    double len = b.number("length", 1.0, 0.1, 10.0);
    b.integer("forward_nodes", 401, 21, 20001);
    b.number("T_parabolic", 0.15, 1e-3, 2.0);
    validate_bumps(b, "bumps", 0.0, len, pr);
  }
  b.finish();
  return b.out();
}

double bumps_at(const Json& bumps, double x) {
  double f = 0.0;
  for (const auto& b : bumps) {
    double z = (x - b["center"].get<double>()) / b["width"].get<double>();
    f += b["amplitude"].get<double>() * std::exp(-z * z);
  }
  return f;
}

double inclusion_c(const Json& truth, double x) {
  for (const auto& inc : truth["inclusions"])
    if (std::abs(x - inc["center"].get<double>()) <= inc["radius"].get<double>() + 1e-9)
      return inc["value"].get<double>();
  return 1.0;
}

// Grid with spacing h through the origin covering [lo, hi].
Grid aligned_line(double lo, double hi, double h) {
  return Grid::line_spacing(h * std::floor(lo / h + 1e-9), h * std::ceil(hi / h - 1e-9), h);
}

struct GlobconvGeometry {
  double h, omega_lo, omega_hi, source_x, source_cells, T, d;
  explicit GlobconvGeometry(const Json& t)
      : h(t["h"].get<double>()),
        omega_lo(t["omega"][0].get<double>()),
        omega_hi(t["omega"][1].get<double>()),
        source_x(t["source_x"].get<double>()),
        source_cells(t["source_cells"].get<double>()),
        T(t["T"].get<double>()),
        d(t["d"].get<double>()) {}
};

// Wave horizon covering the Laplace kernel for s >= 1: exp(-T) below 1e-13.
double parabolic_wave_horizon(double T_parabolic) { return std::sqrt(4.0 * T_parabolic * 40.0) + 1.0; }

// ---------------------------------------------------------------------------
// Output helpers

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream o(p, std::ios::binary);
  if (!o) throw Error("cannot write " + p.string());
  o << s;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& p, const Json& j) { write_text(p, j.dump(2) + "\n"); }

Json read_json(const fs::path& p) {
  try {
    return Json::parse(read_text(p));
  } catch (const Json::parse_error& e) {
    throw Error(p.string() + ": " + e.what());
  }
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double n = 0, d = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    n += (a[k] - b[k]) * (a[k] - b[k]);
    d += b[k] * b[k];
  }
  return d > 0 ? std::sqrt(n / d) : std::sqrt(n);
}

struct Artifacts {
  fs::path dir;
  Json list = Json::array();
  void add(const std::string& name) { list.push_back(name); }
  void field(const ScalarField& f, const std::string& name) {
    write_field_csv(f, (dir / name).string());
    add(name);
    add(name + ".json");
  }
};

// ---------------------------------------------------------------------------
// Regularization parameter

struct GammaChoice {
  double gamma = 0.0;
  std::string rule;
};


// Sweeps six decades from `lo`, two points per decade, and picks the corner.
// `solve` returns the reconstruction; `misfit` its data residual.
GammaChoice lcurve_gamma(double lo, const std::function<ScalarField(double)>& solve,
                         const std::function<double(const ScalarField&)>& misfit, Artifacts& art) {
  std::vector<double> gammas, mis, nrm;
  for (int k = 0; k <= 12; ++k) gammas.push_back(lo * std::pow(10.0, 0.5 * k));
  mis.resize(gammas.size());
  nrm.resize(gammas.size());
  for (std::size_t k = 0; k < gammas.size(); ++k) {
    ScalarField f = solve(gammas[k]);
    mis[k] = misfit(f);
    nrm[k] = l2_norm(f);
  }
  std::size_t c = lcurve_corner(mis, nrm);
  std::string csv = "gamma,misfit,norm,corner\n";
  for (std::size_t k = 0; k < gammas.size(); ++k) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.10e,%.10e,%.10e,%d\n", gammas[k], mis[k], nrm[k], k == c ? 1 : 0);
    csv += buf;
  }
  write_text(art.dir / "lcurve.csv", csv);
  art.add("lcurve.csv");
  return {gammas[c], "l-curve"};
}

void gamma_param(Block& b, Problems& pr) {
  const Json* v = b.get("gamma");
  Json out = "delta-squared";
  if (v) {
    if (v->is_string() && (*v == "delta-squared" || *v == "l-curve"))
      out = *v;
    else if (v->is_number() && v->get<double>() > 0)
      out = v->get<double>();
    else
      pr.add(b.key("gamma"), "must be \"delta-squared\", \"l-curve\" or a positive number");
  }
  b.out()["gamma"] = out;
}

// ---------------------------------------------------------------------------
// Trace helpers

BoundaryTrace resampled_like(const std::vector<double>& series, double dt, const BoundaryTrace& like) {
  BoundaryTrace t = like;
  t.values = resample(series, dt, like.dt, like.samples);
  return t;
}

std::vector<double> difference(const BoundaryTrace& a, const BoundaryTrace& b) {
  std::vector<double> d(a.values.size());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = a.values[k] - b.values[k];
  return d;
}

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t lcurve_corner(const std::vector<double>& misfit, const std::vector<double>& norm) {
  std::size_t best = misfit.size() / 2;
  double best_k = -kInf;
  for (std::size_t k = 1; k + 1 < misfit.size(); ++k) {
    double x[3], y[3];
    for (int j = 0; j < 3; ++j) {
      x[j] = std::log(std::max(misfit[k - 1 + j], 1e-300));
      y[j] = std::log(std::max(norm[k - 1 + j], 1e-300));
    }
    double a = std::hypot(x[1] - x[0], y[1] - y[0]);
    double b = std::hypot(x[2] - x[1], y[2] - y[1]);
    double c = std::hypot(x[2] - x[0], y[2] - y[0]);
    double cross = (x[1] - x[0]) * (y[2] - y[0]) - (y[1] - y[0]) * (x[2] - x[0]);
    if (a * b * c == 0) continue;
    // Positive cross product bends the curve toward the origin (the corner).
    double kappa = 2.0 * cross / (a * b * c);
    if (kappa > best_k) {
      best_k = kappa;
      best = k;
    }
  }
  return best;
}

std::string kind_name(ExperimentKind k) { return kKindNames.at(static_cast<std::size_t>(k)); }

std::string build_id() { return BKINV_BUILD_ID; }

int apply_thread_cap() {
  const char* env = std::getenv("BKINV_THREADS");
  if (env && *env) {
    char* end = nullptr;
    long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1 || n > 4096) throw Error("BKINV_THREADS must be a positive integer, got '" + std::string(env) + "'");
    omp_set_num_threads(static_cast<int>(n));
  }
  return omp_get_max_threads();
}

Json truth_preset(ExperimentKind kind, const std::string& name) {
  Json t;
  if (kind == ExperimentKind::Globconv && (name == "background" || name == "inclusion")) {
    t = Json{{"kind", "globconv"}, {"h", 0.005},        {"omega", {0.0, 1.0}}, {"source_x", -0.4},
             {"source_cells", 3.0}, {"T", 30.0},         {"d", 5.0},            {"inclusions", Json::array()}};
    if (name == "inclusion") t["inclusions"].push_back(Json{{"center", 0.5}, {"radius", 0.1}, {"value", 4.0}});
  } else if (kind == ExperimentKind::Tat && name == "two-bump") {
    t = Json{{"kind", "tat"},
             {"forward_nodes", 401},
             {"T", 1.5},
             {"bumps",
              {Json{{"center", -0.35}, {"width", 0.12}, {"amplitude", 1.0}},
               Json{{"center", 0.3}, {"width", 0.15}, {"amplitude", 0.7}}}}};
  } else if (kind == ExperimentKind::ParabolicRoute && name == "single-bump") {
    t = Json{{"kind", "parabolic-route"},
             {"length", 1.0},
             {"forward_nodes", 401},
             {"T_parabolic", 0.15},
             {"bumps", {Json{{"center", 0.5}, {"width", 0.15}, {"amplitude", 1.0}}}}};
  } else {
    throw Error("unknown " + kind_name(kind) + " preset '" + name + "'");
  }
  return t;
}

Json validate_truth(const Json& truth, ExperimentKind kind) {
  Problems pr;
  Json out = validate_truth_into(truth, kind, "truth", pr);
  pr.raise("truth spec");
  return out;
}

Json ExperimentConfig::echo() const {
  Json j;
  j["kind"] = kind_name(kind);
  j["seed"] = seed;
  if (has_truth(kind)) {
    if (data_dir.empty()) {
      j["delta"] = delta;
      j["truth"] = truth;
    } else {
      j["data"] = data_dir;
    }
  }
  j["output_dir"] = output_dir;
  if (!grid.empty()) j["grid"] = grid;
  j[kind_name(kind)] = params;
  return j;
}

ExperimentConfig parse_config(const Json& j) {
  Problems pr;
  ExperimentConfig cfg;
  Block top(&j, "", pr);
  if (!top.present()) pr.raise("config");

  const Json* kv = top.get("kind");
  bool kind_ok = false;
  if (!kv)
    pr.add("kind", "is required");
  else if (!kv->is_string() || !parse_kind(kv->get<std::string>(), cfg.kind))
    pr.add("kind", "must be one of globconv, qrm-rate, tat, parabolic-route, verify-carleman, verify-volterra");
  else
    kind_ok = true;

  const Json* sv = top.get("seed");
  if (!sv)
    pr.add("seed", "is required");
  else if (sv->is_number_unsigned())
    cfg.seed = sv->get<std::uint64_t>();
  else if (sv->is_number_integer() && sv->get<long long>() >= 0)
    cfg.seed = static_cast<std::uint64_t>(sv->get<long long>());
  else
    pr.add("seed", "must be a non-negative integer");

  const Json* ov = top.get("output_dir");
  if (ov && !ov->is_string())
    pr.add("output_dir", "must be a string");
  else
    cfg.output_dir = ov ? ov->get<std::string>() : "out/" + (kind_ok ? kind_name(cfg.kind) : std::string("run"));

  if (!kind_ok) {
    pr.raise("config");
  }
  const ExperimentKind kind = cfg.kind;
  const std::string kn = kind_name(kind);

  // Data: either generated from a truth spec with noise delta, or read from
  // a make-data directory that carries both.
  const Json* dv = top.get("data");
  const Json* tv = top.get("truth");
  const Json* deltav = top.get("delta");
  if (has_truth(kind)) {
    if (dv) {
      if (!dv->is_string()) pr.add("data", "must be a directory path");
      else cfg.data_dir = dv->get<std::string>();
      if (tv) pr.add("truth", "is taken from the data directory");
      if (deltav) pr.add("delta", "is taken from the data directory");
    } else {
      if (!tv) {
        pr.add("truth", "is required (preset name or inline table)");
      } else if (tv->is_string()) {
        try {
          cfg.truth = truth_preset(kind, tv->get<std::string>());
        } catch (const Error& e) {
          pr.add("truth", e.what());
        }
      } else {
        cfg.truth = validate_truth_into(*tv, kind, "truth", pr);
      }
      if (deltav && (!deltav->is_number() || !(deltav->get<double>() >= 0 && deltav->get<double>() < 1)))
        pr.add("delta", "must be a number in [0, 1)");
      else if (deltav)
        cfg.delta = deltav->get<double>();
    }
  } else {
    if (dv) pr.add("data", "is not used by " + kn);
    if (tv) pr.add("truth", "is not used by " + kn);
    if (deltav) pr.add("delta", kind == ExperimentKind::QrmRate ? "is set per level in qrm-rate.deltas"
                                                                 : "is not used by " + kn);
  }

  const Json* gv = top.get("grid");
  Block grid(gv, "grid", pr);
  Block par(top.get(kn), kn, pr);

  switch (kind) {
    case ExperimentKind::Globconv:
      grid.number("h", 0.005, 1e-4, 0.1);
      grid.number("padding", 1.6, 0.1, 20.0);
      par.number("s_min", 1.0, 1e-3, 1e3);
      par.number("s_max", 8.0, 1e-3, 1e3);
      par.integer("N", 14, 1, 10000);
      par.number("lambda", 50.0, 1e-6, 1e6);
      par.integer("m", 3, 1, 1000);
      par.required_number("d", 1.0, 1e3);
      par.number("eps_source", 3.0, 1.0, 20.0);
      par.number("stop_tol_c", 1e-3, 0.0, 1.0);
      par.number("stop_tol_residual", 1e-3, 0.0, 1.0);
      par.integer("picard_sweeps", 3, 1, 100);
      par.integer("fine", 10, 2, 1000);
      break;
    case ExperimentKind::QrmRate: {
      std::string problem = par.choice("problem", "lateral-wave", {"lateral-wave", "elliptic-cauchy"});
      bool lateral = problem == "lateral-wave";
      grid.number("h", 0.02, 1e-3, 0.2);
      par.numbers("deltas", {1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1}, 1e-12, 0.99, 3);
      par.choice("noise", lateral ? "smooth" : "iid", {"smooth", "iid"});
      par.number("gamma_factor", 1.0, 1e-12, 1e12);
      par.integer("repeats", lateral ? 1 : 30, 1, 1000);
      break;
    }
    case ExperimentKind::Tat:
      grid.integer("nodes", 101, 11, 2001);
      gamma_param(par, pr);
      par.number("noiseless_gamma", 1e-8, 1e-16, 1.0);
      par.number("lcurve_min", 1e-10, 1e-16, 1.0);
      par.integer("penalty_order", 2, 1, 2);
      break;
    case ExperimentKind::ParabolicRoute:
      grid.integer("nodes", 51, 11, 2001);
      grid.integer("time_nodes", 101, 11, 20001);
      gamma_param(par, pr);
      par.number("noiseless_gamma", 1e-10, 1e-16, 1.0);
      par.number("lcurve_min", 1e-12, 1e-16, 1.0);
      par.integer("penalty_order", 1, 1, 2);
      par.number("T", 0.15, 1e-3, 2.0);
      par.number("padding", 0.0, 0.0, 100.0);
      break;
    case ExperimentKind::VerifyCarleman: {
      std::string est = par.choice("estimate", "parabolic", {"parabolic", "hyperbolic"});
      par.choice("coefficient", "constant", {"constant", "variable"});
      par.integer("train", 50, 2, 100000);
      par.integer("held_out", 50, 1, 100000);
      bool para = est == "parabolic";
      par.number("sweep_lo", 1.0, 1e-6, 1e6);
      par.number("sweep_hi", para ? 64.0 : 1024.0, 1e-6, 1e6);
      par.integer("sweep_count", para ? 13 : 21, 3, 1000);
      par.integer("nodes_per_axis", 20001, 11, 200001);
      if (gv) pr.add("grid", "is not used by " + kn);
      break;
    }
    case ExperimentKind::VerifyVolterra:
      par.integer("samples", 100, 1, 100000);
      par.numbers("lambdas", {10.0, 50.0, 100.0}, 1e-6, 1e6, 2);
      par.integer("nodes", 20001, 101, 2000001);
      par.number("a", 1.0, 1e-6, 1e6);
      par.number("b", 1.0, 1e-6, 1e6);
      if (gv) pr.add("grid", "is not used by " + kn);
      break;
  }
  if (kind == ExperimentKind::Globconv && par.out().contains("s_max") &&
      !(par.out()["s_max"].get<double>() > par.out()["s_min"].get<double>()))
    pr.add(kn + ".s_max", "must exceed s_min");
  if (kind == ExperimentKind::Globconv || kind == ExperimentKind::QrmRate || kind == ExperimentKind::Tat ||
      kind == ExperimentKind::ParabolicRoute)
    cfg.grid = grid.out();
  grid.finish();
  par.finish();
  top.finish();
  pr.raise("config");
  cfg.params = par.out();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw Error(path + ": " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Synthetic data

void add_trace_noise(BoundaryTrace& t, double delta, Rng rng) {
  if (delta == 0.0) return;
  for (std::size_t b = 0; b < t.nodes.size(); ++b) {
    std::vector<double> s = t.series(b);
    Rng r = rng.child(static_cast<std::uint64_t>(b));
    apply_noise(s, delta, NoiseKind::Iid, r);
    for (int k = 0; k < t.samples; ++k) t.at(b, k) = s[k];
  }
}

double relative_perturbation(const BoundaryTrace& clean, const BoundaryTrace& noisy) {
  return rel_l2(noisy.values, clean.values);
}

SyntheticData make_synthetic(const Json& truth_in, double delta, std::uint64_t seed) {
  if (!truth_in.is_object() || !truth_in.contains("kind") || !truth_in["kind"].is_string())
    throw ConfigError("truth spec is invalid:\n  truth.kind: is required", {"truth.kind"});
  ExperimentKind kind;
  std::string kn = truth_in["kind"].get<std::string>();
  if (!parse_kind(kn, kind) || !has_truth(kind))
    throw ConfigError("truth spec is invalid:\n  truth.kind: must be globconv, tat or parabolic-route",
                      {"truth.kind"});
  if (!(delta >= 0 && delta < 1)) throw Error("make_synthetic: delta must lie in [0, 1)");

  SyntheticData out;
  out.kind = kind;
  out.truth = validate_truth(truth_in, kind);
  out.delta = delta;
  out.seed = seed;
  const Json& t = out.truth;

  if (kind == ExperimentKind::Globconv) {
    GlobconvGeometry geo(t);
    double reach = geo.T / 2 + 1.0;
    Grid wide = aligned_line(std::min(geo.omega_lo, geo.source_x) - reach, geo.omega_hi + reach, geo.h);
    CoefficientModel c = CoefficientModel::background(wide, geo.d);
    for (int i = 0; i < wide.n[0]; ++i) c.c(i) = inclusion_c(t, wide.x(i));
    WaveOptions wo;
    wo.cfl = 0.9;
    WaveResult w = wave_forward(c, MollifiedSource::on_grid(wide, {geo.source_x, 0.0}, geo.source_cells), geo.T,
                                SubBox::from_coords(wide, geo.omega_lo, geo.omega_hi), wo);
    out.clean = w.trace;
  } else if (kind == ExperimentKind::Tat) {
    int n = t["forward_nodes"].get<int>();
    ScalarField f(Grid::line(-1, 1, n));
    for (int i = 0; i < n; ++i) f(i) = bumps_at(t["bumps"], f.grid.x(i));
    out.clean = tat_forward(f, ScalarField(), t["T"].get<double>()).problem.p;
  } else {
    int n = t["forward_nodes"].get<int>();
    ScalarField f(Grid::line(0, t["length"].get<double>(), n));
    for (int i = 0; i < n; ++i) f(i) = bumps_at(t["bumps"], f.grid.x(i));
    double dtau = 0;
    std::vector<double> tr = face_wave_trace(f, parabolic_wave_horizon(t["T_parabolic"].get<double>()), 0.9, dtau);
    out.clean.nodes = {0};
    out.clean.coords = {{0.0, 0.0}};
    out.clean.samples = static_cast<int>(tr.size());
    out.clean.dt = dtau;
    out.clean.values = std::move(tr);
  }
  out.trace = out.clean;
  add_trace_noise(out.trace, delta, Rng(seed).child("noise"));
  out.measured_perturbation = relative_perturbation(out.clean, out.trace);
  return out;
}

void write_trace_csv(const BoundaryTrace& t, const std::string& path) {
  std::string s = "t";
  for (std::size_t b = 0; b < t.nodes.size(); ++b) s += ",node_" + std::to_string(b);
  s += "\n";
  char buf[40];
  for (int k = 0; k < t.samples; ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", k * t.dt);
    s += buf;
    for (std::size_t b = 0; b < t.nodes.size(); ++b) {
      std::snprintf(buf, sizeof buf, ",%.17g", t.at(b, k));
      s += buf;
    }
    s += "\n";
  }
  write_text(path, s);
  Json h;
  h["format"] = "bkinv-trace";
  h["version"] = 1;
  h["samples"] = t.samples;
  h["dt"] = t.dt;
  h["nodes"] = t.nodes;
  Json coords = Json::array();
  for (const auto& c : t.coords) coords.push_back({c[0], c[1]});
  h["coords"] = coords;
  write_json(path + ".json", h);
}

BoundaryTrace read_trace_csv(const std::string& path) {
  Json h = read_json(path + ".json");
  if (h.value("format", "") != "bkinv-trace" || h.value("version", 0) != 1)
    throw Error(path + ".json: not a bkinv-trace version 1 header");
  BoundaryTrace t;
  t.samples = h["samples"].get<int>();
  t.dt = h["dt"].get<double>();
  t.nodes = h["nodes"].get<std::vector<std::size_t>>();
  for (const auto& c : h["coords"]) t.coords.push_back({c[0].get<double>(), c[1].get<double>()});
  t.values.assign(t.nodes.size() * t.samples, 0.0);
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::string line;
  std::getline(in, line);
  for (int k = 0; k < t.samples; ++k) {
    if (!std::getline(in, line)) throw Error(path + ": expected " + std::to_string(t.samples) + " rows");
    const char* p = line.c_str();
    char* end = nullptr;
    std::strtod(p, &end);
    for (std::size_t b = 0; b < t.nodes.size(); ++b) {
      if (*end != ',') throw Error(path + ": malformed row " + std::to_string(k + 2));
      t.at(b, k) = std::strtod(end + 1, &end);
    }
  }
  return t;
}

void write_synthetic(const SyntheticData& d, const std::string& dir) {
  fs::create_directories(dir);
  write_trace_csv(d.trace, (fs::path(dir) / "trace.csv").string());
  Json j;
  j["format"] = "bkinv-synthetic";
  j["version"] = 1;
  j["build"] = build_id();
  j["truth"] = d.truth;
  j["delta"] = d.delta;
  j["seed"] = d.seed;
  j["noise"] = "iid-uniform-multiplicative";
  j["measured_perturbation"] = d.measured_perturbation;
  write_json(fs::path(dir) / "truth.json", j);
}

SyntheticData read_synthetic(const std::string& dir) {
  Json j = read_json(fs::path(dir) / "truth.json");
  if (j.value("format", "") != "bkinv-synthetic") throw Error(dir + "/truth.json: not a bkinv-synthetic file");
  SyntheticData d;
  std::string kn = j["truth"]["kind"].get<std::string>();
  if (!parse_kind(kn, d.kind)) throw Error(dir + "/truth.json: unknown kind " + kn);
  d.truth = validate_truth(j["truth"], d.kind);
  d.delta = j["delta"].get<double>();
  d.seed = j["seed"].get<std::uint64_t>();
  d.measured_perturbation = j["measured_perturbation"].get<double>();
  d.trace = read_trace_csv((fs::path(dir) / "trace.csv").string());
  return d;
}

// ---------------------------------------------------------------------------
// Rate setups

RateSetup lateral_wave_rate_setup(double h) {
  int nx = static_cast<int>(std::lround(2.0 / h)) + 1, nt = static_cast<int>(std::lround(3.0 / h)) + 1;
  Grid g = Grid::rect(-1, 1, nx, -1.5, 1.5, nt);
  ScalarField u(g);
  auto pulse = [](double z) { return std::exp(-z * z / 0.08); };
  for (int j = 0; j < nt; ++j)
    for (int i = 0; i < nx; ++i) u(i, j) = pulse(g.x(i) - g.y(j) - 0.2) + 0.5 * pulse(g.x(i) + g.y(j) + 0.1);
  RateSetup s;
  s.problem.op = QrmOperator::Hyperbolic;
  s.problem.grid = g;
  s.problem.data = cauchy_data_from_field(u, {Face::XLo, Face::XHi});
  s.exact = u;
  s.noise = NoiseKind::Smooth;
  return s;
}

RateSetup elliptic_cauchy_rate_setup(double h) {
  int n = static_cast<int>(std::lround(1.0 / h)) + 1;
  Grid g = Grid::rect(0, 1, n, 0, 1, n);
  // Growth rate of the discrete harmonic mode, so the field is exact for the stencil.
  double mu = std::acosh(2.0 - std::cos(std::numbers::pi * g.h[0])) / g.h[1];
  ScalarField u(g);
  std::vector<char> region(g.size());
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      u(i, j) = std::sin(std::numbers::pi * g.x(i)) * std::exp(mu * g.y(j));
      region[g.index(i, j)] = g.y(j) <= 0.5 + 1e-9;
    }
  RateSetup s;
  s.problem.op = QrmOperator::Elliptic;
  s.problem.grid = g;
  s.problem.data = cauchy_data_from_field(u, {Face::YLo});
  s.exact = u;
  s.region = std::move(region);
  s.noise = NoiseKind::Iid;
  s.repeats = 30;
  return s;
}

// ---------------------------------------------------------------------------
// Experiment kinds

namespace {

SyntheticData experiment_data(const ExperimentConfig& cfg) {
  if (cfg.data_dir.empty()) return make_synthetic(cfg.truth, cfg.delta, cfg.seed);
  SyntheticData d = read_synthetic(cfg.data_dir);
  if (d.kind != cfg.kind)
    throw Error("data directory " + cfg.data_dir + " holds " + kind_name(d.kind) + " data, not " + kind_name(cfg.kind));
  return d;
}

void data_metrics(const SyntheticData& d, Json& m) {
  m["delta"] = d.delta;
  m["measured_perturbation"] = d.measured_perturbation;
}

Json run_globconv(const ExperimentConfig& cfg, Artifacts& art) {
  SyntheticData data = experiment_data(cfg);
  GlobconvGeometry geo(data.truth);
  const Json& p = cfg.params;
  double h = cfg.grid["h"].get<double>(), pad = cfg.grid["padding"].get<double>();
  if (geo.source_x < geo.omega_lo - pad + 2 * h || geo.source_x > geo.omega_hi + pad - 2 * h)
    throw Error("grid.padding does not reach the source at x = " + fmt("%g", geo.source_x));

  GlobconvSetup setup;
  setup.grid = aligned_line(geo.omega_lo - pad, geo.omega_hi + pad, h);
  setup.omega = SubBox::from_coords(setup.grid, geo.omega_lo, geo.omega_hi);
  setup.source = MollifiedSource::on_grid(setup.grid, {geo.source_x, 0.0}, p["eps_source"].get<double>());

  GlobconvConfig gc;
  gc.s_min = p["s_min"];
  gc.s_max = p["s_max"];
  gc.N = p["N"];
  gc.lambda = p["lambda"];
  gc.m = p["m"];
  gc.d = p["d"];
  gc.eps_source = p["eps_source"];
  gc.stop_tol_c = p["stop_tol_c"];
  gc.stop_tol_residual = p["stop_tol_residual"];
  gc.picard_sweeps = p["picard_sweeps"];
  gc.fine = p["fine"];
  gc.seed = cfg.seed;
  if (data.trace.nodes.size() != setup.omega.boundary_nodes(setup.grid).size())
    throw Error("trace has " + std::to_string(data.trace.nodes.size()) + " nodes; omega has " +
                std::to_string(setup.omega.boundary_nodes(setup.grid).size()) + " boundary nodes");

  GlobconvResult r = run_reconstruction(data.trace, setup, gc);

  const ScalarField& c = r.c.c;
  ScalarField truth(c.grid);
  for (int i = 0; i < c.grid.n[0]; ++i) truth(i) = inclusion_c(data.truth, c.grid.x(i));
  art.field(c, "c.csv");
  art.field(truth, "truth_c.csv");
  write_globconv_log(r.log, (art.dir / "log.csv").string());
  art.add("log.csv");

  Json m;
  data_metrics(data, m);
  m["c_l2_error"] = rel_l2(c.v, truth.v);
  double cmax = *std::max_element(c.v.begin(), c.v.end());
  double tmax = *std::max_element(truth.v.begin(), truth.v.end());
  m["max_value_error"] = std::abs(cmax - tmax) / tmax;
  m["c_min"] = *std::min_element(c.v.begin(), c.v.end());
  m["c_max"] = cmax;
  const Json& incs = data.truth["inclusions"];
  if (!incs.empty()) {
    double w = 0, wx = 0;
    for (int i = 0; i < c.grid.n[0]; ++i) {
      double e = std::max(c(i) - 1.0, 0.0);
      w += e;
      wx += e * c.grid.x(i);
    }
    double radius = incs[0]["radius"].get<double>();
    m["centroid_error_radii"] =
        w > 0 ? std::abs(wx / w - incs[0]["center"].get<double>()) / radius : std::numeric_limits<double>::quiet_NaN();
  }
  m["stopped"] = r.stopped;
  m["stop_n"] = r.stop_n;
  m["stop_i"] = r.stop_i;
  m["iterations"] = r.log.size();
  m["final_boundary_residual"] = r.log.empty() ? 0.0 : r.log.back().boundary_residual;
  m["picard_change"] = r.picard_change;
  return m;
}

Json run_qrm_rate(const ExperimentConfig& cfg, Artifacts& art) {
  const Json& p = cfg.params;
  double h = cfg.grid["h"].get<double>();
  RateSetup s = p["problem"] == "lateral-wave" ? lateral_wave_rate_setup(h) : elliptic_cauchy_rate_setup(h);
  s.noise = p["noise"] == "smooth" ? NoiseKind::Smooth : NoiseKind::Iid;
  s.gamma_factor = p["gamma_factor"];
  s.repeats = p["repeats"];
  std::vector<double> deltas = p["deltas"].get<std::vector<double>>();
  RateResult r = rate_experiment(s, deltas, cfg.seed);
  write_rate_csv(r, (art.dir / "rates.csv").string());
  art.add("rates.csv");

  Json m;
  m["slope"] = r.slope;
  m["noiseless_error"] = r.noiseless_error;
  bool monotone = true;
  for (std::size_t k = 1; k < r.rows.size(); ++k)
    if (!(r.rows[k].error_region >= r.rows[k - 1].error_region)) monotone = false;
  m["monotone"] = monotone;
  m["levels"] = r.rows.size();
  m["error_smallest_delta"] = r.rows.front().error_region;
  m["error_largest_delta"] = r.rows.back().error_region;
  return m;
}

GammaChoice fixed_gamma(const Json& rule, double delta, double noiseless) {
  if (rule.is_number()) return {rule.get<double>(), "fixed"};
  if (delta > 0) return {delta * delta, "delta-squared"};
  return {noiseless, "noiseless"};
}

void write_sidecar(const Artifacts& art, const std::string& field, double gamma, const std::string& rule,
                   double delta, const Json& errors) {
  Json j;
  j["gamma"] = gamma;
  j["gamma_rule"] = rule;
  j["delta"] = delta;
  j["error_metrics"] = errors;
  write_json(art.dir / (field + ".meta.json"), j);
}

Json field_errors(const ScalarField& f, const ScalarField& truth) {
  Json e;
  e["rel_l2_error"] = rel_l2(f.v, truth.v);
  double mx = 0;
  for (std::size_t k = 0; k < f.size(); ++k) mx = std::max(mx, std::abs(f.v[k] - truth.v[k]));
  e["max_abs_error"] = mx;
  return e;
}

Json run_tat(const ExperimentConfig& cfg, Artifacts& art) {
  SyntheticData data = experiment_data(cfg);
  if (data.trace.nodes.size() != 2) throw Error("tat data needs traces at both ends");
  const Json& p = cfg.params;
  TatProblem prob;
  prob.grid = Grid::line(-1, 1, cfg.grid["nodes"].get<int>());
  prob.p = data.trace;
  TatReconstructOptions opt;
  opt.penalty_order = p["penalty_order"];

  GammaChoice g;
  if (p["gamma"] == "l-curve") {
    auto solve = [&](double gamma) {
      TatReconstructOptions o = opt;
      o.gamma = gamma;
      return tat_reconstruct(prob, o);
    };
    auto misfit = [&](const ScalarField& f) {
      BoundaryTrace pred = tat_forward(f, ScalarField(), prob.T()).problem.p;
      BoundaryTrace at_data = data.trace;
      for (std::size_t b = 0; b < 2; ++b) {
        std::vector<double> s = resample(pred.series(b), pred.dt, data.trace.dt, data.trace.samples);
        for (int k = 0; k < data.trace.samples; ++k) at_data.at(b, k) = s[k];
      }
      return norm(difference(at_data, data.trace)) / norm(data.trace.values);
    };
    g = lcurve_gamma(p["lcurve_min"].get<double>(), solve, misfit, art);
  } else {
    g = fixed_gamma(p["gamma"], data.delta, p["noiseless_gamma"]);
  }
  opt.gamma = g.gamma;
  ScalarField f = tat_reconstruct(prob, opt);
  ScalarField truth(prob.grid);
  for (int i = 0; i < prob.grid.n[0]; ++i) truth(i) = bumps_at(data.truth["bumps"], prob.grid.x(i));
  art.field(f, "f.csv");
  art.field(truth, "truth_f.csv");
  Json errors = field_errors(f, truth);
  write_sidecar(art, "f.csv", g.gamma, g.rule, data.delta, errors);
  art.add("f.csv.meta.json");

  Json m;
  data_metrics(data, m);
  m["gamma"] = g.gamma;
  m["gamma_rule"] = g.rule;
  m["rel_l2_error"] = errors["rel_l2_error"];
  m["max_abs_error"] = errors["max_abs_error"];
  return m;
}

Json run_parabolic_route(const ExperimentConfig& cfg, Artifacts& art) {
  SyntheticData data = experiment_data(cfg);
  if (data.trace.nodes.size() != 1) throw Error("parabolic-route data needs a single face trace");
  const Json& p = cfg.params;
  ParabolicRouteProblem prob;
  prob.length = data.truth["length"];
  prob.nodes = cfg.grid["nodes"];
  prob.time_nodes = cfg.grid["time_nodes"];
  prob.T = p["T"];
  prob.dtau = data.trace.dt;
  prob.trace = data.trace.values;
  ParabolicRouteOptions opt;
  opt.penalty_order = p["penalty_order"];
  opt.padding = p["padding"];

  GammaChoice g;
  if (p["gamma"] == "l-curve") {
    auto solve = [&](double gamma) {
      ParabolicRouteOptions o = opt;
      o.gamma = gamma;
      return parabolic_route_reconstruct(prob, o);
    };
    auto misfit = [&](const ScalarField& f) {
      double T_wave = data.trace.dt * (data.trace.samples - 1), dtau = 0;
      std::vector<double> pred = face_wave_trace(f, T_wave, 0.9, dtau);
      BoundaryTrace at_data = resampled_like(pred, dtau, data.trace);
      return norm(difference(at_data, data.trace)) / norm(data.trace.values);
    };
    g = lcurve_gamma(p["lcurve_min"].get<double>(), solve, misfit, art);
  } else {
    g = fixed_gamma(p["gamma"], data.delta, p["noiseless_gamma"]);
  }
  opt.gamma = g.gamma;
  ScalarField f = parabolic_route_reconstruct(prob, opt);
  ScalarField truth(f.grid);
  for (int i = 0; i < f.grid.n[0]; ++i) truth(i) = bumps_at(data.truth["bumps"], f.grid.x(i));
  art.field(f, "f.csv");
  art.field(truth, "truth_f.csv");
  Json errors = field_errors(f, truth);
  write_sidecar(art, "f.csv", g.gamma, g.rule, data.delta, errors);
  art.add("f.csv.meta.json");

  Json m;
  data_metrics(data, m);
  m["gamma"] = g.gamma;
  m["gamma_rule"] = g.rule;
  m["rel_l2_error"] = errors["rel_l2_error"];
  m["max_abs_error"] = errors["max_abs_error"];
  return m;
}

Json run_verify_carleman(const ExperimentConfig& cfg, Artifacts& art) {
  const Json& p = cfg.params;
  bool variable = p["coefficient"] == "variable";
  std::vector<double> sweep =
      geometric_sweep(p["sweep_lo"].get<double>(), p["sweep_hi"].get<double>(), p["sweep_count"].get<int>());
  SuiteResult r;
  if (p["estimate"] == "parabolic") {
    SpaceTimeCoefficient a = variable ? SpaceTimeCoefficient([](double x, double t) { return 1.0 + 0.5 * x + 0.2 * t; })
                                      : SpaceTimeCoefficient([](double, double) { return 1.0; });
    r = parabolic_suite(a, ParabolicCwf{}, sweep, p["train"], p["held_out"], cfg.seed);
  } else {
    SeparableSpeed speed{[](double) { return 1.0; }, [](double) { return 1.0; }};
    if (variable) {
      auto g = [](double z) { return 1.0 / (1.0 + 0.5 * z * z); };
      speed = SeparableSpeed{g, g};
    }
    r = hyperbolic_suite(speed, HyperbolicCwf{}, sweep, p["train"], p["held_out"], cfg.seed,
                         p["nodes_per_axis"].get<int>());
  }
  write_json(art.dir / "suite.json", to_json(r));
  art.add("suite.json");

  std::string cal = "lambda,min_constant\n";
  for (std::size_t k = 0; k < r.calibration.sweep.size(); ++k)
    cal += fmt("%.10e", r.calibration.sweep[k]) + "," + fmt("%.10e", r.calibration.min_constant[k]) + "\n";
  write_text(art.dir / "calibration.csv", cal);
  art.add("calibration.csv");
  std::string held = "bump,lambda,lhs,rhs,ratio,log_scale,holds\n";
  for (std::size_t b = 0; b < r.held_out.size(); ++b)
    for (const auto& e : r.held_out[b])
      held += std::to_string(b) + "," + fmt("%.10e", e.lambda) + "," + fmt("%.10e", e.lhs) + "," +
              fmt("%.10e", e.rhs) + "," + fmt("%.10e", e.ratio) + "," + fmt("%.10e", e.log_scale) + "," +
              (e.holds ? "1" : "0") + "\n";
  write_text(art.dir / "held_out.csv", held);
  art.add("held_out.csv");

  Json m;
  m["found"] = r.calibration.found;
  m["lambda_star"] = r.calibration.lambda_star;
  m["C"] = r.calibration.C;
  m["all_hold_at_2x"] = r.all_hold_at_2x;
  m["ratio_increasing"] = r.ratio_increasing;
  m["holds"] = r.calibration.found && r.all_hold_at_2x;
  return m;
}

Json run_verify_volterra(const ExperimentConfig& cfg, Artifacts& art) {
  const Json& p = cfg.params;
  const int samples = p["samples"], nodes = p["nodes"];
  const double a = p["a"], b = p["b"];
  std::vector<double> lambdas = p["lambdas"].get<std::vector<double>>();
  const std::size_t nl = lambdas.size();
  std::vector<VolterraReport> rep(samples * nl);
  Rng root = Rng(cfg.seed).child("volterra");
  auto phi = [](double z) { return -z; };
  std::string err;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < samples; ++i) {
    try {
      Rng rng = root.child(static_cast<std::uint64_t>(i));
      std::vector<double> g = random_piecewise_smooth(nodes, a, rng);
      for (std::size_t l = 0; l < nl; ++l) rep[i * nl + l] = volterra_weight_check(g, a, phi, lambdas[l], b);
    } catch (const std::exception& e) {
#pragma omp critical
      if (err.empty()) err = e.what();
    }
  }
  if (!err.empty()) throw Error(err);

  std::string csv = "sample,lambda,lhs,rhs,ratio,weighted_g2,damping,holds\n";
  bool holds = true;
  int holding = 0;
  double max_ratio = 0, max_damping_ratio = 0, damping_first = 0, damping_last = 0;
  for (int i = 0; i < samples; ++i) {
    bool all = true;
    for (std::size_t l = 0; l < nl; ++l) {
      const VolterraReport& r = rep[i * nl + l];
      csv += std::to_string(i) + "," + fmt("%.10e", r.lambda) + "," + fmt("%.10e", r.lhs) + "," + fmt("%.10e", r.rhs) +
             "," + fmt("%.10e", r.ratio) + "," + fmt("%.10e", r.weighted_g2) + "," + fmt("%.10e", r.damping) + "," +
             (r.holds ? "1" : "0") + "\n";
      all = all && r.holds;
      max_ratio = std::max(max_ratio, r.ratio);
    }
    holding += all ? 1 : 0;
    holds = holds && all;
    max_damping_ratio = std::max(max_damping_ratio, rep[i * nl + nl - 1].damping / rep[i * nl].damping);
    damping_first += rep[i * nl].damping;
    damping_last += rep[i * nl + nl - 1].damping;
  }
  write_text(art.dir / "volterra.csv", csv);
  art.add("volterra.csv");

  Json m;
  m["holds"] = holds;
  m["samples_holding"] = holding;
  m["max_ratio"] = max_ratio;
  // Sample-mean damping at the largest lambda over that at the smallest.
  m["damping_ratio"] = damping_last / damping_first;
  m["max_damping_ratio"] = max_damping_ratio;
  return m;
}

}  // namespace

Json run_experiment(const ExperimentConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  Artifacts art;
  art.dir = cfg.output_dir;
  fs::create_directories(art.dir);
  Json metrics;
  try {
    switch (cfg.kind) {
      case ExperimentKind::Globconv: metrics = run_globconv(cfg, art); break;
      case ExperimentKind::QrmRate: metrics = run_qrm_rate(cfg, art); break;
      case ExperimentKind::Tat: metrics = run_tat(cfg, art); break;
      case ExperimentKind::ParabolicRoute: metrics = run_parabolic_route(cfg, art); break;
      case ExperimentKind::VerifyCarleman: metrics = run_verify_carleman(cfg, art); break;
      case ExperimentKind::VerifyVolterra: metrics = run_verify_volterra(cfg, art); break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(kind_name(cfg.kind) + ": " + e.what());
  }
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Json s;
  s["schema"] = "bkinv-summary";
  s["schema_version"] = kSummarySchemaVersion;
  s["kind"] = kind_name(cfg.kind);
  s["build"] = build_id();
  s["config"] = cfg.echo();
  s["metrics"] = metrics;
  s["artifacts"] = art.list;
  s["wall_time_s"] = wall;
  write_json(art.dir / "summary.json", s);
  return s;
}

// ---------------------------------------------------------------------------
// Report

Json report(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error("report: " + dir + " is not a directory");
  std::vector<fs::path> summaries;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() == "summary.json") summaries.push_back(e.path());
  std::sort(summaries.begin(), summaries.end());

  Json rows = Json::array();
  auto add = [&](const std::string& exp, const std::string& kind, const std::string& metric, const Json& v) {
    rows.push_back(Json{{"experiment", exp}, {"kind", kind}, {"metric", metric}, {"value", v}});
  };
  for (const auto& p : summaries) {
    Json s = read_json(p);
    if (s.value("schema", "") != "bkinv-summary") continue;
    std::string exp = fs::relative(p.parent_path(), dir).generic_string();
    if (exp.empty()) exp = ".";
    std::string kind = s.value("kind", "");
    for (auto it = s["metrics"].begin(); it != s["metrics"].end(); ++it)
      if (it->is_primitive()) add(exp, kind, it.key(), *it);
    add(exp, kind, "wall_time_s", s["wall_time_s"]);
    // Row counts of the tabular artifacts next to the summary.
    for (const auto& a : s["artifacts"]) {
      std::string name = a.get<std::string>();
      fs::path f = p.parent_path() / name;
      if (f.extension() != ".csv" || fs::exists(f.string() + ".json") || !fs::exists(f)) continue;
      std::ifstream in(f);
      std::string line;
      long n = -1;
      while (std::getline(in, line)) ++n;
      add(exp, kind, "rows:" + name, std::max(n, 0L));
    }
  }

  auto cell = [](const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return std::string(v.get<bool>() ? "true" : "false");
    if (v.is_number_integer()) return v.dump();
    if (v.is_number()) return fmt("%.6g", v.get<double>());
    return std::string("null");
  };
  std::string csv = "experiment,kind,metric,value\n";
  for (const auto& r : rows)
    csv += r["experiment"].get<std::string>() + "," + r["kind"].get<std::string>() + "," +
           r["metric"].get<std::string>() + "," + cell(r["value"]) + "\n";
  write_text(fs::path(dir) / "report.csv", csv);
  for (auto& r : rows) r["value"] = cell(r["value"]);
  return rows;
}

std::string format_report(const Json& table) {
  const char* cols[] = {"experiment", "kind", "metric", "value"};
  std::size_t w[4];
  for (int c = 0; c < 4; ++c) {
    w[c] = std::string(cols[c]).size();
    for (const auto& r : table) w[c] = std::max(w[c], r[cols[c]].get<std::string>().size());
  }
  auto line = [&](const std::string* v) {
    std::string s;
    for (int c = 0; c < 4; ++c) {
      s += v[c];
      if (c < 3) s += std::string(w[c] - v[c].size() + 2, ' ');
    }
    return s + "\n";
  };
  std::string head[4] = {cols[0], cols[1], cols[2], cols[3]};
  std::string out = line(head);
  for (const auto& r : table) {
    std::string v[4];
    for (int c = 0; c < 4; ++c) v[c] = r[cols[c]].get<std::string>();
    out += line(v);
  }
  return out;
}

}  // namespace bkinv
