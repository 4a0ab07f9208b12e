#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

#include "bkinv/experiments.hpp"

using namespace bkinv;

namespace {

// Prints a metric block as "key = value" lines.
void print_metrics(const Json& summary) {
  std::printf("%s finished in %.2f s\n", summary["kind"].get<std::string>().c_str(),
              summary["wall_time_s"].get<double>());
  for (auto it = summary["metrics"].begin(); it != summary["metrics"].end(); ++it)
    std::printf("  %-26s %s\n", it.key().c_str(), it->dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Globally convergent and quasi-reversibility inverse solvers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", build_id());

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  std::string truth_path, out_dir = "data";
  double delta = 0.0;
  std::uint64_t seed = 0;
  auto* make = app.add_subcommand("make-data", "Forward-solve a truth spec and write noisy boundary data");
  make->add_option("truth", truth_path, "Truth spec (JSON)")->required()->check(CLI::ExistingFile);
  make->add_option("--delta", delta, "Multiplicative noise level")->check(CLI::Range(0.0, 0.999));
  make->add_option("--seed", seed, "Seed of the noise generator")->required();
  make->add_option("--out", out_dir, "Output directory")->capture_default_str();

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "Collect experiment summaries below a directory into report.csv");
  rep->add_option("dir", report_dir, "Directory to scan")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    apply_thread_cap();
    if (*run) {
      ExperimentConfig cfg = load_config(config_path);
      Json summary = run_experiment(cfg);
      print_metrics(summary);
      std::printf("summary: %s\n", (std::filesystem::path(cfg.output_dir) / "summary.json").string().c_str());
    } else if (*make) {
      Json truth = Json::parse(std::ifstream(truth_path));
      SyntheticData d = make_synthetic(truth, delta, seed);
      write_synthetic(d, out_dir);
      std::printf("%s data: %zu trace nodes, %d samples, delta %g, measured perturbation %.4g\n",
                  kind_name(d.kind).c_str(), d.trace.nodes.size(), d.trace.samples, d.delta,
                  d.measured_perturbation);
      std::printf("written to %s\n", out_dir.c_str());
    } else if (*rep) {
      Json table = report(report_dir);
      std::fputs(format_report(table).c_str(), stdout);
      std::printf("report: %s\n", (std::filesystem::path(report_dir) / "report.csv").string().c_str());
    }
  } catch (const Json::parse_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
