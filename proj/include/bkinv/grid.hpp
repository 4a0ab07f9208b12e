#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace bkinv {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Uniform node-centred box grid in one or two space dimensions.
// For dims == 1 the second axis is a single dummy node.
struct Grid {
  int dims = 1;
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{0.0, 0.0};
  std::array<double, 2> h{1.0, 1.0};
  std::array<int, 2> n{3, 1};

  static Grid line(double a, double b, int count);
  static Grid line_spacing(double a, double b, double spacing);
  static Grid rect(double ax, double bx, int nx, double ay, double by, int ny);
  static Grid rect_spacing(double ax, double bx, double ay, double by, double spacing);

  std::size_t size() const { return static_cast<std::size_t>(n[0]) * n[1]; }
  std::size_t index(int i, int j = 0) const {
    return static_cast<std::size_t>(j) * n[0] + i;
  }
  double x(int i) const { return lo[0] + i * h[0]; }
  double y(int j) const { return dims == 2 ? lo[1] + j * h[1] : 0.0; }
  bool on_boundary(int i, int j = 0) const;
  // Nearest node index along an axis, clamped to the grid.
  int nearest(int axis, double coord) const;
  double cell_volume() const { return dims == 2 ? h[0] * h[1] : h[0]; }
  bool same_shape(const Grid& o) const;
  void validate() const;
};

struct ScalarField {
  Grid grid;
  std::vector<double> v;

  ScalarField() = default;
  explicit ScalarField(const Grid& g, double fill = 0.0) : grid(g), v(g.size(), fill) {}
  ScalarField(const Grid& g, std::vector<double> values);

  double& operator()(int i, int j = 0) { return v[grid.index(i, j)]; }
  double operator()(int i, int j = 0) const { return v[grid.index(i, j)]; }
  std::size_t size() const { return v.size(); }
  bool all_finite() const;
};

// Index box [i0, i1] x [j0, j1] of a grid, inclusive.  Used for the
// measurement domain inside a padded computational grid.
struct SubBox {
  std::array<int, 2> first{0, 0};
  std::array<int, 2> last{0, 0};

  static SubBox whole(const Grid& g);
  static SubBox from_coords(const Grid& g, double ax, double bx, double ay = 0.0, double by = 0.0);
  int count(int axis) const { return last[axis] - first[axis] + 1; }
  bool contains(int i, int j = 0) const {
    return i >= first[0] && i <= last[0] && j >= first[1] && j <= last[1];
  }
  bool on_edge(const Grid& g, int i, int j = 0) const;
  // Boundary nodes of the box in a fixed order: for 1D left then right;
  // for 2D counter-clockwise starting at (first, first).
  std::vector<std::size_t> boundary_nodes(const Grid& g) const;
  Grid as_grid(const Grid& g) const;
};

ScalarField restrict_to(const ScalarField& f, const SubBox& box);

ScalarField laplacian(const ScalarField& f);
std::vector<ScalarField> gradient(const ScalarField& f);
double integrate(const ScalarField& f);
// Squared gradient magnitude, a common building block.
ScalarField grad_squared(const ScalarField& f);

// Trapezoid rule on equally spaced samples.
double trapezoid(const std::vector<double>& y, double dx);

double l2_norm(const ScalarField& f);
double max_abs(const ScalarField& f);

// Observed order from errors at h and h/2 (log2 of the ratio).
double observed_order(double err_h, double err_half);

void write_field_csv(const ScalarField& f, const std::string& path);
ScalarField read_field_csv(const std::string& path);

}  // namespace bkinv
