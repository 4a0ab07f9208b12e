#pragma once

#include <functional>
#include <vector>

#include "bkinv/forward.hpp"
#include "bkinv/grid.hpp"
#include "bkinv/qrm.hpp"

namespace bkinv {

// Initial-condition problems in one space dimension.

// Wave data on the two ends of the measurement interval, u(x, 0) = f,
// u_t(x, 0) = 0, c = 1 outside the interval.
struct TatProblem {
  Grid grid;          // measurement interval, 1D
  ScalarField c;      // leading coefficient on `grid`; empty means 1
  BoundaryTrace p;    // Dirichlet trace at the two ends, samples over [0, T]
  double T() const { return p.dt * (p.samples - 1); }
  void validate() const;
};

// Full-space forward solve on a padded line.  Returns the Dirichlet data and
// the Neumann trace of the same solve (central difference across the end).
struct TatSynthetic {
  TatProblem problem;
  BoundaryTrace neumann;
};
TatSynthetic tat_forward(const ScalarField& f, const ScalarField& c, double T, double cfl = 0.9);

struct ExteriorOptions {
  double padding = 0.0;  // exterior length; 0 picks 0.6 T + 10 h
};

// Outward normal derivative at each end from its Dirichlet trace, by a
// leapfrog solve of u_tt = u_xx on the exterior segment with zero initial
// data (grid step equal to the sampling step, which is exact in 1D).
// Rejects paddings whose far-end reflection returns before T.
BoundaryTrace exterior_neumann_recovery(const BoundaryTrace& p, const ExteriorOptions& opt = {});

struct TatReconstructOptions {
  double gamma = 1e-8;
  int penalty_order = 2;
};

// exterior_neumann_recovery, even extension, hyperbolic QRM, t = 0 slice.
ScalarField tat_reconstruct(const TatProblem& problem, const TatReconstructOptions& opt = {});

// One-face problem: f supported in (0, length), wave data at x = 0 only.
struct ParabolicRouteProblem {
  double length = 1.0;
  int nodes = 51;         // x nodes on [0, length]
  double T = 0.15;        // parabolic horizon
  int time_nodes = 101;   // t nodes on [0, T]
  double dtau = 0.0;      // sampling step of the wave trace
  std::vector<double> trace;  // u(0, tau), tau = k dtau
  void validate() const;
};

struct ParabolicRouteOptions {
  double gamma = 1e-8;
  int penalty_order = 1;
  double padding = 0.0;  // exterior heat segment length; 0 picks 8 sqrt(T)
};

// Transformed face data on the parabolic time grid: Dirichlet value and
// inward x-derivative at x = 0.
struct ParabolicFaceData {
  std::vector<double> t;
  std::vector<double> dirichlet;
  std::vector<double> derivative;
};

// Reznickaya transform of the trace plus the exterior heat solve on
// (-padding, 0) with zero initial data.
ParabolicFaceData parabolic_face_data(const ParabolicRouteProblem& problem, const ParabolicRouteOptions& opt = {});

// r(x, t) = dirichlet(t) + x derivative(t) on the QRM grid.
ScalarField affine_extension(const ParabolicFaceData& data, const Grid& g);

// QRM for v_t - v_xx on [0, length] x [0, T] with zero Cauchy data at x = 0
// for w = v - r; returns w(x, 0) + r(x, 0).
ScalarField parabolic_route_reconstruct(const ParabolicRouteProblem& problem, const ParabolicRouteOptions& opt = {});

// u(0, tau) for the whole-line wave problem with u(x, 0) = f, u_t = 0, c = 1,
// f sampled on a grid inside x > 0.  Leapfrog on a padded line.
std::vector<double> face_wave_trace(const ScalarField& f, double T, double cfl, double& dtau);

}  // namespace bkinv
