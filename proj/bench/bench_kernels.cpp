// Serial reference kernels against their OpenMP versions.  Thread count
// follows BKINV_THREADS (default: all cores).

#include <CLI11.hpp>
#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "bkinv/carleman.hpp"
#include "bkinv/experiments.hpp"
#include "bkinv/forward.hpp"
#include "bkinv/sparse.hpp"

using namespace bkinv;

namespace {

double seconds(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

void row(const char* name, double serial, double threaded, double diff) {
  std::printf("%-22s %12.3e %12.3e %8.2fx %12.1e\n", name, serial, threaded, serial / threaded, diff);
}

Csr five_point(int n) {
  std::vector<Triplet> t;
  auto id = [n](int i, int j) { return j * n + i; };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      t.push_back({id(i, j), id(i, j), 4.0});
      if (i > 0) t.push_back({id(i, j), id(i - 1, j), -1.0});
      if (i < n - 1) t.push_back({id(i, j), id(i + 1, j), -1.0});
      if (j > 0) t.push_back({id(i, j), id(i, j - 1), -1.0});
      if (j < n - 1) t.push_back({id(i, j), id(i, j + 1), -1.0});
    }
  return Csr::from_triplets(n * n, n * n, std::move(t));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel timings: serial reference against OpenMP"};
  int n = 401, reps = 20, bumps = 8;
  app.add_option("--size", n, "Grid nodes per axis")->check(CLI::Range(21, 4001));
  app.add_option("--reps", reps, "Timed repetitions")->check(CLI::Range(1, 10000));
  app.add_option("--bumps", bumps, "Bumps in the Carleman suite timing")->check(CLI::Range(2, 1000));
  CLI11_PARSE(app, argc, argv);

  int threads = apply_thread_cap();
  std::printf("threads %d, grid %d x %d, build %s\n\n", threads, n, n, build_id().c_str());
  std::printf("%-22s %12s %12s %9s %12s\n", "kernel", "serial [s]", "omp [s]", "speedup", "max diff");

  {
    Csr a = five_point(n);
    std::vector<double> x(a.cols), y1, y2;
    for (int k = 0; k < a.cols; ++k) x[k] = std::sin(0.001 * k);
    double ts = seconds([&] { matvec_serial(a, x, y1); }, reps);
    double tp = seconds([&] { matvec(a, x, y2); }, reps);
    row("matvec", ts, tp, max_diff(y1, y2));
  }

  {
    Grid g = Grid::rect(-1, 1, n, -1, 1, n);
    ScalarField c(g, 1.0), u(g), up(g), next1(g), next2(g);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) u(i, j) = up(i, j) = std::exp(-10 * (g.x(i) * g.x(i) + g.y(j) * g.y(j)));
    double dt = wave_time_step(g, 1.0, 0.5);
    double ts = seconds([&] { leapfrog_step_serial(c, u, up, dt, next1); }, reps);
    double tp = seconds([&] { leapfrog_step(c, u, up, dt, next2); }, reps);
    row("leapfrog_step", ts, tp, max_diff(next1.v, next2.v));

    ScalarField l1, l2;
    omp_set_num_threads(1);
    double t1 = seconds([&] { l1 = laplacian(u); }, reps);
    omp_set_num_threads(threads);
    double tn = seconds([&] { l2 = laplacian(u); }, reps);
    row("laplacian", t1, tn, max_diff(l1.v, l2.v));
  }

  {
    // Independent cells: one Carleman integral set per bump.
    ParabolicCwf shape;
    auto a = [](double, double) { return 1.0; };
    SuiteResult r1, r2;
    auto sweep = geometric_sweep(1, 64, 7);
    omp_set_num_threads(1);
    double t1 = seconds([&] { r1 = parabolic_suite(a, shape, sweep, bumps, bumps, 3); }, 1);
    omp_set_num_threads(threads);
    double tn = seconds([&] { r2 = parabolic_suite(a, shape, sweep, bumps, bumps, 3); }, 1);
    row("carleman suite", t1, tn, std::abs(r1.calibration.C - r2.calibration.C));
  }
  return 0;
}
