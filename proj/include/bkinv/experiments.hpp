#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bkinv/forward.hpp"
#include "bkinv/grid.hpp"
#include "bkinv/qrm.hpp"
#include "bkinv/rng.hpp"

namespace bkinv {

using Json = nlohmann::ordered_json;

inline constexpr int kSummarySchemaVersion = 1;

// Validation failure; `keys` lists every offending key path.
struct ConfigError : Error {
  std::vector<std::string> keys;
  ConfigError(const std::string& msg, std::vector<std::string> k) : Error(msg), keys(std::move(k)) {}
};

enum class ExperimentKind { Globconv, QrmRate, Tat, ParabolicRoute, VerifyCarleman, VerifyVolterra };
std::string kind_name(ExperimentKind k);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Globconv;
  std::uint64_t seed = 0;
  double delta = 0.0;
  std::string output_dir;
  std::string data_dir;  // make-data output to use instead of generating
  Json truth;            // resolved truth spec (presets expanded)
  Json grid;             // with defaults filled
  Json params;           // kind block with defaults filled

  Json echo() const;
};

// Presets: globconv "background" | "inclusion"; tat "two-bump";
// parabolic-route "single-bump".  Inline objects are validated the same way.
Json truth_preset(ExperimentKind kind, const std::string& name);

ExperimentConfig parse_config(const Json& j);
ExperimentConfig load_config(const std::string& path);

// Runs the experiment, writes artifacts and summary.json into output_dir,
// and returns the summary.
Json run_experiment(const ExperimentConfig& cfg);

// Synthetic measurements for a truth spec.  The truth spec carries its own
// "kind" (globconv | tat | parabolic-route).
struct SyntheticData {
  ExperimentKind kind = ExperimentKind::Globconv;
  Json truth;
  double delta = 0.0;
  std::uint64_t seed = 0;
  BoundaryTrace clean;
  BoundaryTrace trace;  // with noise
  double measured_perturbation = 0.0;
};

// Multiplicative uniform noise of level delta, one child stream per node.
void add_trace_noise(BoundaryTrace& t, double delta, Rng rng);
double relative_perturbation(const BoundaryTrace& clean, const BoundaryTrace& noisy);

Json validate_truth(const Json& truth, ExperimentKind kind);
SyntheticData make_synthetic(const Json& truth, double delta, std::uint64_t seed);
void write_synthetic(const SyntheticData& d, const std::string& dir);
SyntheticData read_synthetic(const std::string& dir);

void write_trace_csv(const BoundaryTrace& t, const std::string& path);
BoundaryTrace read_trace_csv(const std::string& path);

// Rate-experiment setups shared by the CLI and the acceptance suite.
// Lateral Cauchy data on x = -1 and x = 1 for two travelling pulses.
RateSetup lateral_wave_rate_setup(double h);
// sin(pi x) e^{mu y} on the unit square with data on y = 0; error on y <= 1/2.
RateSetup elliptic_cauchy_rate_setup(double h);

// Index of the L-curve corner: largest signed curvature of
// (log misfit, log norm) over consecutive triples, gamma ascending.
std::size_t lcurve_corner(const std::vector<double>& misfit, const std::vector<double>& norm);

// Collects summary.json files below `dir` into report.csv there.
Json report(const std::string& dir);
std::string format_report(const Json& table);

std::string build_id();
// Applies BKINV_THREADS to OpenMP; returns the thread count in force.
int apply_thread_cap();

}  // namespace bkinv
