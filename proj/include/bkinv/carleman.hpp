#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include <json.hpp>

#include "bkinv/forward.hpp"
#include "bkinv/rng.hpp"

namespace bkinv {

// Parabolic weight exp(lambda * psi^-nu) with psi = x + t^2/(2T^2) + alpha,
// one space dimension, on G = {psi < eta, x > 0}.
struct ParabolicCwf {
  double lambda = 1.0;
  double nu = 3.0;
  double alpha = 0.5;
  double eta = 0.9;
  double T = 1.0;

  double psi(double x, double t) const { return x + t * t / (2.0 * T * T) + alpha; }
  void validate() const;
};

// Hyperbolic weight exp(lambda * xi), xi = |x - x0|^2 - eta t^2, on
// G = {xi > gamma} inside the disk of radius R.
struct HyperbolicCwf {
  double lambda = 1.0;
  double eta = 0.5;
  double gamma = 0.05;
  double radius = 0.95;
  std::array<double, 2> x0{0.0, 0.0};

  double xi(double x, double y, double t) const {
    return (x - x0[0]) * (x - x0[0]) + (y - x0[1]) * (y - x0[1]) - eta * t * t;
  }
  void validate() const;
};

// exp(lambda (s - s_hi)) on (s_lo, s_hi).
struct PseudoFreqCwf {
  double lambda = 1.0;
  double s_lo = 0.0;
  double s_hi = 1.0;
  double operator()(double s) const;
};

// Tensor product of (1 - r^2)^3 profiles, r = (z - center) / width; C^2
// with compact support.  Axes: (x, t) for parabolic, (x, y, t) for hyperbolic.
struct TensorBump {
  std::vector<double> center;
  std::vector<double> width;
  double amplitude = 1.0;

  // Profile and its first two derivatives in physical units along `axis`.
  std::array<double, 3> profile(int axis, double z) const;
};

struct EstimateReport {
  double lambda = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;      // lhs / rhs
  double log_scale = 0.0;  // lhs and rhs are the integrals times exp(-log_scale)
  bool holds = false;
};
nlohmann::ordered_json to_json(const EstimateReport& r);

using SpaceTimeCoefficient = std::function<double(double x, double t)>;

// Integrals of one bump against the parabolic weight for any lambda up to
// the resolution limit given at construction.  The weight exponent is
// binned with second-order moment expansion inside each bin.
class ParabolicIntegrals {
 public:
  ParabolicIntegrals(const ParabolicCwf& shape, const SpaceTimeCoefficient& a, const TensorBump& u,
                     double lambda_max);
  struct Sums {
    double lhs = 0.0;   // (Lu)^2 phi^2,          Lu = u_t - a u_xx
    double grad = 0.0;  // (u_x)^2 phi^2
    double zero = 0.0;  // psi^(-2 nu - 2) u^2 phi^2
    double log_scale = 0.0;
  };
  Sums at(double lambda) const;
  std::array<int, 2> nodes() const { return nodes_; }

 private:
  double lambda_max_;
  double e_lo_ = 0.0, e_hi_ = 0.0, bin_ = 0.0;
  std::array<int, 2> nodes_{0, 0};
  std::vector<std::array<double, 9>> bins_;
};

// c^2(x, y) = gx(x) gy(y).
struct SeparableSpeed {
  std::function<double(double)> gx;
  std::function<double(double)> gy;
  double c2(double x, double y) const { return gx(x) * gy(y); }
};

class HyperbolicIntegrals {
 public:
  HyperbolicIntegrals(const HyperbolicCwf& shape, const SeparableSpeed& speed, const TensorBump& u,
                      int nodes_per_axis = 20001);
  struct Sums {
    double lhs = 0.0;   // (u_tt - c^2 Lap u)^2 phi^2
    double grad = 0.0;  // (|grad u|^2 + u_t^2) phi^2
    double zero = 0.0;  // u^2 phi^2
    double log_scale = 0.0;
  };
  Sums at(double lambda) const;

 private:
  HyperbolicCwf shape_;
  TensorBump u_;
  std::array<std::vector<double>, 3> z_;
  std::array<std::array<std::vector<double>, 3>, 3> d_;  // [axis][derivative order]
  std::array<std::vector<double>, 2> g_;                  // gx on x nodes, gy on y nodes
};

// Rejects bumps whose support leaves the admissible domain.
void check_parabolic_support(const ParabolicCwf& shape, const TensorBump& u);
void check_hyperbolic_support(const HyperbolicCwf& shape, const TensorBump& u);

// Random bump with support inside the admissible domain.
TensorBump random_parabolic_bump(const ParabolicCwf& shape, Rng& rng);
TensorBump random_hyperbolic_bump(const HyperbolicCwf& shape, Rng& rng);

// LHS >= C (lambda nu G + lambda^3 nu^4 Z).
EstimateReport verify_parabolic_estimate(const SpaceTimeCoefficient& a, const TensorBump& u,
                                         const ParabolicCwf& cwf, double C);
// LHS >= C lambda G + lambda^3 Z.  Checks the speed precondition first.
EstimateReport verify_hyperbolic_estimate(const SeparableSpeed& speed, const TensorBump& u, const HyperbolicCwf& cwf,
                                          double C);

// Nodes of the disk where (x - x0) . grad(c^-2) < -tol, by central
// differences on `c` (one-sided at the grid edge).
std::vector<std::size_t> speed_condition_violations(const ScalarField& c, std::array<double, 2> x0,
                                                    double radius, double tol = 1e-12);
ScalarField sample_speed(const SeparableSpeed& speed, const Grid& g);

// Split-sample calibration.  c_values[i][k] is bump i's constant
// lhs / (rhs without C) at sweep[k].  lambda_star is the smallest sweep
// value from which every bump's constant increases; C is their minimum there.
struct Calibration {
  std::vector<double> sweep;
  std::vector<double> min_constant;  // per sweep value
  bool found = false;
  double lambda_star = 0.0;
  double C = 0.0;
};
Calibration calibrate(const std::vector<std::vector<double>>& c_values, const std::vector<double>& sweep);

struct SuiteResult {
  Calibration calibration;
  std::vector<double> check_lambdas;                // lambda*, 2 lambda*, 4 lambda*
  std::vector<std::vector<EstimateReport>> held_out;  // [bump][check lambda]
  bool all_hold_at_2x = false;
  bool ratio_increasing = false;
};
nlohmann::ordered_json to_json(const SuiteResult& r);

std::vector<double> geometric_sweep(double lo, double hi, int count);

SuiteResult parabolic_suite(const SpaceTimeCoefficient& a, const ParabolicCwf& shape, const std::vector<double>& sweep,
                            int train, int held_out, std::uint64_t seed);
SuiteResult hyperbolic_suite(const SeparableSpeed& speed, const HyperbolicCwf& shape,
                             const std::vector<double>& sweep, int train, int held_out, std::uint64_t seed,
                             int nodes_per_axis = 20001);

// Weighted Volterra inequality
//   int_{-a}^{a} (int_0^t g)^2 e^{2 lambda phi(t^2)} dt
//     <= 1/(4 lambda b) int_{-a}^{a} g^2 e^{2 lambda phi(t^2)} dt
// for g sampled uniformly on [-a, a] (odd sample count, t = 0 in the middle).
struct VolterraReport {
  double lambda = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;        // lhs / rhs
  double weighted_g2 = 0.0;  // int g^2 e^{2 lambda phi(t^2)}
  double damping = 0.0;      // lhs / weighted_g2, the part that scales like 1/lambda
  bool holds = false;
};
nlohmann::ordered_json to_json(const VolterraReport& r);

// Relative slack allowed for quadrature error when comparing the two sides.
inline constexpr double kVolterraQuadratureSlack = 1e-7;

VolterraReport volterra_weight_check(const std::vector<double>& g, double a, const std::function<double(double)>& phi,
                                     double lambda, double b);

// Piecewise-smooth random function on [-a, a]: a few random sine modes plus
// one jump at a random point.
std::vector<double> random_piecewise_smooth(int samples, double a, Rng& rng);

}  // namespace bkinv
