#include "bkinv/grid.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace bkinv {

namespace {

int count_for_spacing(double a, double b, double spacing) {
  if (!(spacing > 0.0) || !(b > a)) throw Error("grid: invalid extent or spacing");
  double cells = (b - a) / spacing;
  long r = std::lround(cells);
  if (std::abs(cells - r) > 1e-6 * std::max(1.0, cells))
    throw Error("grid: extent is not an integer multiple of the spacing");
  return static_cast<int>(r) + 1;
}

// One-sided second-order second derivative at the low end of a line.
inline double d2_low(double f0, double f1, double f2, double f3) {
  return 2.0 * f0 - 5.0 * f1 + 4.0 * f2 - f3;
}

}  // namespace

Grid Grid::line(double a, double b, int count) {
  Grid g;
  g.dims = 1;
  g.lo = {a, 0.0};
  g.hi = {b, 0.0};
  g.n = {count, 1};
  g.h = {(b - a) / (count - 1), 1.0};
  g.validate();
  return g;
}

Grid Grid::line_spacing(double a, double b, double spacing) {
  return line(a, b, count_for_spacing(a, b, spacing));
}

Grid Grid::rect(double ax, double bx, int nx, double ay, double by, int ny) {
  Grid g;
  g.dims = 2;
  g.lo = {ax, ay};
  g.hi = {bx, by};
  g.n = {nx, ny};
  g.h = {(bx - ax) / (nx - 1), (by - ay) / (ny - 1)};
  g.validate();
  return g;
}

Grid Grid::rect_spacing(double ax, double bx, double ay, double by, double spacing) {
  return rect(ax, bx, count_for_spacing(ax, bx, spacing), ay, by, count_for_spacing(ay, by, spacing));
}

void Grid::validate() const {
  if (dims != 1 && dims != 2) throw Error("grid: dims must be 1 or 2");
  for (int a = 0; a < dims; ++a) {
    if (n[a] < 3) throw Error("grid: need at least 3 nodes per axis");
    if (!(h[a] > 0.0)) throw Error("grid: spacing must be positive");
    double len = hi[a] - lo[a];
    if (std::abs(h[a] * (n[a] - 1) - len) > 1e-12 * std::max(1.0, std::abs(len)))
      throw Error("grid: spacing inconsistent with extent");
  }
  if (dims == 1 && n[1] != 1) throw Error("grid: 1D grid must have one node on axis 2");
}

bool Grid::on_boundary(int i, int j) const {
  if (i == 0 || i == n[0] - 1) return true;
  if (dims == 2 && (j == 0 || j == n[1] - 1)) return true;
  return false;
}

int Grid::nearest(int axis, double coord) const {
  long k = std::lround((coord - lo[axis]) / h[axis]);
  if (k < 0) k = 0;
  if (k > n[axis] - 1) k = n[axis] - 1;
  return static_cast<int>(k);
}

bool Grid::same_shape(const Grid& o) const {
  return dims == o.dims && n == o.n && std::abs(h[0] - o.h[0]) < 1e-14 &&
         std::abs(h[1] - o.h[1]) < 1e-14 && std::abs(lo[0] - o.lo[0]) < 1e-12 &&
         std::abs(lo[1] - o.lo[1]) < 1e-12;
}

ScalarField::ScalarField(const Grid& g, std::vector<double> values) : grid(g), v(std::move(values)) {
  if (v.size() != grid.size()) throw Error("field: value count does not match grid");
}

bool ScalarField::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

SubBox SubBox::whole(const Grid& g) {
  SubBox b;
  b.first = {0, 0};
  b.last = {g.n[0] - 1, g.n[1] - 1};
  return b;
}

SubBox SubBox::from_coords(const Grid& g, double ax, double bx, double ay, double by) {
  SubBox b;
  b.first = {g.nearest(0, ax), g.dims == 2 ? g.nearest(1, ay) : 0};
  b.last = {g.nearest(0, bx), g.dims == 2 ? g.nearest(1, by) : 0};
  for (int a = 0; a < g.dims; ++a)
    if (b.last[a] - b.first[a] < 2) throw Error("subbox: needs at least 3 nodes per axis");
  return b;
}

bool SubBox::on_edge(const Grid& g, int i, int j) const {
  if (!contains(i, j)) return false;
  if (i == first[0] || i == last[0]) return true;
  if (g.dims == 2 && (j == first[1] || j == last[1])) return true;
  return false;
}

std::vector<std::size_t> SubBox::boundary_nodes(const Grid& g) const {
  std::vector<std::size_t> out;
  if (g.dims == 1) {
    out.push_back(g.index(first[0]));
    out.push_back(g.index(last[0]));
    return out;
  }
  for (int i = first[0]; i < last[0]; ++i) out.push_back(g.index(i, first[1]));
  for (int j = first[1]; j < last[1]; ++j) out.push_back(g.index(last[0], j));
  for (int i = last[0]; i > first[0]; --i) out.push_back(g.index(i, last[1]));
  for (int j = last[1]; j > first[1]; --j) out.push_back(g.index(first[0], j));
  return out;
}

Grid SubBox::as_grid(const Grid& g) const {
  if (g.dims == 1) return Grid::line(g.x(first[0]), g.x(last[0]), count(0));
  return Grid::rect(g.x(first[0]), g.x(last[0]), count(0), g.y(first[1]), g.y(last[1]), count(1));
}

ScalarField restrict_to(const ScalarField& f, const SubBox& box) {
  ScalarField out(box.as_grid(f.grid));
  for (int j = 0; j < out.grid.n[1]; ++j)
    for (int i = 0; i < out.grid.n[0]; ++i) out(i, j) = f(box.first[0] + i, box.first[1] + j);
  return out;
}

namespace {

// Second derivative along one axis at node k of a line of m samples,
// reading sample r through get(r).
template <class Get>
double second_along(int k, int m, double h, Get get) {
  double inv = 1.0 / (h * h);
  if (k > 0 && k < m - 1) return (get(k - 1) - 2.0 * get(k) + get(k + 1)) * inv;
  if (m == 3) return (get(0) - 2.0 * get(1) + get(2)) * inv;
  if (k == 0) return d2_low(get(0), get(1), get(2), get(3)) * inv;
  return d2_low(get(m - 1), get(m - 2), get(m - 3), get(m - 4)) * inv;
}

template <class Get>
double first_along(int k, int m, double h, Get get) {
  if (k > 0 && k < m - 1) return (get(k + 1) - get(k - 1)) / (2.0 * h);
  if (k == 0) return (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h);
  return (3.0 * get(m - 1) - 4.0 * get(m - 2) + get(m - 3)) / (2.0 * h);
}

}  // namespace

ScalarField laplacian(const ScalarField& f) {
  const Grid& g = f.grid;
  g.validate();
  ScalarField out(g);
  const int nx = g.n[0], ny = g.n[1];
#pragma omp parallel for schedule(static) if (g.size() > 20000)
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      double val = second_along(i, nx, g.h[0], [&](int r) { return f(r, j); });
      if (g.dims == 2) val += second_along(j, ny, g.h[1], [&](int r) { return f(i, r); });
      out(i, j) = val;
    }
  }
  return out;
}

std::vector<ScalarField> gradient(const ScalarField& f) {
  const Grid& g = f.grid;
  g.validate();
  std::vector<ScalarField> out(g.dims, ScalarField(g));
  const int nx = g.n[0], ny = g.n[1];
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      out[0](i, j) = first_along(i, nx, g.h[0], [&](int r) { return f(r, j); });
      if (g.dims == 2) out[1](i, j) = first_along(j, ny, g.h[1], [&](int r) { return f(i, r); });
    }
  }
  return out;
}

ScalarField grad_squared(const ScalarField& f) {
  auto gr = gradient(f);
  ScalarField out(f.grid);
  for (std::size_t k = 0; k < out.size(); ++k) {
    double s = 0.0;
    for (const auto& c : gr) s += c.v[k] * c.v[k];
    out.v[k] = s;
  }
  return out;
}

double trapezoid(const std::vector<double>& y, double dx) {
  if (y.size() < 2) return 0.0;
  double s = 0.5 * (y.front() + y.back());
  for (std::size_t k = 1; k + 1 < y.size(); ++k) s += y[k];
  return s * dx;
}

double integrate(const ScalarField& f) {
  const Grid& g = f.grid;
  const int nx = g.n[0], ny = g.n[1];
  double total = 0.0;
  for (int j = 0; j < ny; ++j) {
    double wy = (g.dims == 2 && (j == 0 || j == ny - 1)) ? 0.5 : 1.0;
    double row = 0.0;
    for (int i = 0; i < nx; ++i) {
      double wx = (i == 0 || i == nx - 1) ? 0.5 : 1.0;
      row += wx * f(i, j);
    }
    total += wy * row;
  }
  return total * g.cell_volume();
}

double l2_norm(const ScalarField& f) {
  ScalarField sq(f.grid);
  for (std::size_t k = 0; k < f.size(); ++k) sq.v[k] = f.v[k] * f.v[k];
  return std::sqrt(integrate(sq));
}

double max_abs(const ScalarField& f) {
  double m = 0.0;
  for (double x : f.v) m = std::max(m, std::abs(x));
  return m;
}

double observed_order(double err_h, double err_half) { return std::log2(err_h / err_half); }

void write_field_csv(const ScalarField& f, const std::string& path) {
  const Grid& g = f.grid;
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << (g.dims == 2 ? "x,y,value\n" : "x,value\n");
  char buf[96];
  for (int j = 0; j < g.n[1]; ++j) {
    for (int i = 0; i < g.n[0]; ++i) {
      if (g.dims == 2)
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", g.x(i), g.y(j), f(i, j));
      else
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", g.x(i), f(i, j));
      os << buf;
    }
  }
  nlohmann::ordered_json hdr;
  hdr["format"] = "bkinv-field";
  hdr["version"] = 1;
  hdr["dims"] = g.dims;
  hdr["lo"] = {g.lo[0], g.lo[1]};
  hdr["hi"] = {g.hi[0], g.hi[1]};
  hdr["n"] = {g.n[0], g.n[1]};
  hdr["order"] = "x fastest";
  std::ofstream hs(path + ".json");
  if (!hs) throw Error("cannot write " + path + ".json");
  hs << hdr.dump(2) << "\n";
}

ScalarField read_field_csv(const std::string& path) {
  std::ifstream hs(path + ".json");
  if (!hs) throw Error("missing field header " + path + ".json");
  nlohmann::json hdr = nlohmann::json::parse(hs);
  Grid g;
  int dims = hdr.at("dims").get<int>();
  if (dims == 1)
    g = Grid::line(hdr["lo"][0].get<double>(), hdr["hi"][0].get<double>(), hdr["n"][0].get<int>());
  else
    g = Grid::rect(hdr["lo"][0].get<double>(), hdr["hi"][0].get<double>(), hdr["n"][0].get<int>(),
                   hdr["lo"][1].get<double>(), hdr["hi"][1].get<double>(), hdr["n"][1].get<int>());
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path);
  std::string line;
  std::getline(is, line);
  std::vector<double> vals;
  vals.reserve(g.size());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto pos = line.rfind(',');
    vals.push_back(std::stod(line.substr(pos + 1)));
  }
  return ScalarField(g, std::move(vals));
}

}  // namespace bkinv
