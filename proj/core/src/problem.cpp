#include "ddet/problem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "ddet/errors.hpp"

namespace ddet::setup {

namespace {

constexpr double kPi = std::numbers::pi;

// Edge between the power-series and exponential-series evaluations of the
// Planck integral.
constexpr double kSeriesSplit = 2.0;

// zeta(s) for even s >= 2 by direct summation plus an Euler-Maclaurin tail.
double zeta(int s) {
  constexpr int kTerms = 20;
  double sum = 0.0;
  for (int k = kTerms - 1; k >= 1; --k) sum += std::pow(static_cast<double>(k), -s);
  const double n = kTerms;
  const double r3 = s * (s + 1.0) * (s + 2.0);
  const double r5 = r3 * (s + 3.0) * (s + 4.0);
  const double r7 = r5 * (s + 5.0) * (s + 6.0);
  sum += std::pow(n, 1 - s) / (s - 1) + 0.5 * std::pow(n, -s) + s * std::pow(n, -s - 1) / 12.0 -
         r3 * std::pow(n, -s - 3) / 720.0 + r5 * std::pow(n, -s - 5) / 30240.0 -
         r7 * std::pow(n, -s - 7) / 1209600.0;
  return sum;
}

// Coefficients b_k = B_k / k! of t/(e^t - 1), k = 0..kMax.
struct BernoulliTable {
  static constexpr int kMax = 60;
  std::array<double, kMax + 1> coeff{};
  BernoulliTable() {
    coeff[0] = 1.0;
    coeff[1] = -0.5;
    for (int k = 2; k <= kMax; k += 2) {
      const int n = k / 2;
      const double sign = (n % 2 == 1) ? 1.0 : -1.0;
      coeff[static_cast<std::size_t>(k)] = sign * 2.0 * zeta(k) / std::pow(2.0 * kPi, k);
    }
  }
};

const BernoulliTable& bernoulli() {
  static const BernoulliTable table;
  return table;
}

// int_0^x t^3/(e^t-1) dt via sum_k b_k x^(k+3)/(k+3), valid for x < 2*pi.
double lower_planck(double x) {
  if (x <= 0.0) return 0.0;
  const auto& b = bernoulli().coeff;
  double sum = 0.0;
  double xp = x * x * x;  // x^(k+3) at k = 0
  for (int k = 0; k <= BernoulliTable::kMax; ++k) {
    const double term = b[static_cast<std::size_t>(k)] * xp / (k + 3);
    sum += term;
    if (k > 4 && k % 2 == 0 && std::abs(term) < 1e-18 * std::abs(sum)) break;
    xp *= x;
  }
  return sum;
}

// int_x^inf t^3/(e^t-1) dt via sum_n e^{-nx}(x^3/n + 3x^2/n^2 + 6x/n^3 + 6/n^4).
double upper_planck(double x) {
  if (std::isinf(x)) return 0.0;
  double sum = 0.0;
  const double x2 = x * x;
  const double x3 = x2 * x;
  for (int n = 1;; ++n) {
    const double dn = n;
    const double e = std::exp(-dn * x);
    const double term = e * (x3 / dn + 3.0 * x2 / (dn * dn) + 6.0 * x / (dn * dn * dn) +
                             6.0 / (dn * dn * dn * dn));
    sum += term;
    if (n >= 25 && (term == 0.0 || term < 1e-17 * sum)) break;
    if (n > 100000) break;
  }
  return sum;
}

constexpr double kPlanckTotal = kPi * kPi * kPi * kPi / 15.0;

}  // namespace

// --- mesh -------------------------------------------------------------------

SpatialMesh::SpatialMesh(std::vector<double> dx, std::vector<double> dy)
    : nx_(static_cast<int>(dx.size())),
      ny_(static_cast<int>(dy.size())),
      dx_(std::move(dx)),
      dy_(std::move(dy)) {
  if (nx_ < 1 || ny_ < 1) throw ConfigError("mesh needs at least one cell in each direction");
  for (double w : dx_)
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("cell width must be positive");
  for (double w : dy_)
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("cell height must be positive");
}

SpatialMesh SpatialMesh::uniform(int nx, int ny, double dx, double dy) {
  if (nx < 1 || ny < 1) throw ConfigError("mesh needs at least one cell in each direction");
  return SpatialMesh(std::vector<double>(static_cast<std::size_t>(nx), dx),
                     std::vector<double>(static_cast<std::size_t>(ny), dy));
}

std::size_t SpatialMesh::face_of_cell(int i, int j, Side side) const noexcept {
  switch (side) {
    case Side::kLeft: return vface(i, j);
    case Side::kRight: return vface(i + 1, j);
    case Side::kBottom: return num_vfaces() + hface(i, j);
    case Side::kTop: return num_vfaces() + hface(i, j + 1);
  }
  return 0;
}

double SpatialMesh::face_length(int i, int j, Side side) const {
  return (side == Side::kLeft || side == Side::kRight) ? dy(j) : dx(i);
}

double SpatialMesh::width() const { return std::accumulate(dx_.begin(), dx_.end(), 0.0); }
double SpatialMesh::height() const { return std::accumulate(dy_.begin(), dy_.end(), 0.0); }

double SpatialMesh::total_area() const {
  double area = 0.0;
  for (int j = 0; j < ny_; ++j)
    for (int i = 0; i < nx_; ++i) area += cell_area(i, j);
  return area;
}

std::size_t SpatialMesh::boundary_face(Side side, int k) const noexcept {
  switch (side) {
    case Side::kLeft: return face_of_cell(0, k, side);
    case Side::kRight: return face_of_cell(nx_ - 1, k, side);
    case Side::kBottom: return face_of_cell(k, 0, side);
    case Side::kTop: return face_of_cell(k, ny_ - 1, side);
  }
  return 0;
}

std::size_t SpatialMesh::boundary_cell(Side side, int k) const noexcept {
  switch (side) {
    case Side::kLeft: return cell(0, k);
    case Side::kRight: return cell(nx_ - 1, k);
    case Side::kBottom: return cell(k, 0);
    case Side::kTop: return cell(k, ny_ - 1);
  }
  return 0;
}

// --- frequency grid -----------------------------------------------------------

FrequencyGrid::FrequencyGrid(std::vector<double> upper) {
  if (upper.empty()) throw ConfigError("frequency grid needs at least one group");
  edges_.reserve(upper.size() + 1);
  edges_.push_back(0.0);
  for (double nu : upper) {
    if (!(nu > edges_.back())) throw ConfigError("group boundaries must be strictly increasing");
    edges_.push_back(nu);
  }
}

// --- Planck -------------------------------------------------------------------

void require_temperature(double temperature) {
  if (!(temperature >= kMinTemperature) || !std::isfinite(temperature))
    throw DomainError("temperature " + std::to_string(temperature) + " keV is below the " +
                      std::to_string(kMinTemperature) + " keV floor");
}

double planck_integral(double a, double b) {
  if (b <= a) return 0.0;
  if (b <= kSeriesSplit) return lower_planck(b) - lower_planck(a);
  if (a >= kSeriesSplit) return upper_planck(a) - upper_planck(b);
  return (lower_planck(kSeriesSplit) - lower_planck(a)) +
         (upper_planck(kSeriesSplit) - upper_planck(b));
}

double planck_group(double temperature, int g, const FrequencyGrid& grid,
                    const Constants& constants) {
  require_temperature(temperature);
  if (g < 0 || g >= grid.num_groups()) throw ShapeError("group index out of range");
  const double a = grid.lower(g) / temperature;
  const double b = grid.open_ended(g) ? std::numeric_limits<double>::infinity()
                                      : grid.upper(g) / temperature;
  const double t4 = temperature * temperature * temperature * temperature;
  const double fraction = planck_integral(a, b) / kPlanckTotal;
  return constants.a_r * constants.c * t4 * fraction / (4.0 * kPi);
}

std::vector<double> planck_groups(double temperature, const FrequencyGrid& grid,
                                  const Constants& constants) {
  std::vector<double> out(static_cast<std::size_t>(grid.num_groups()));
  for (int g = 0; g < grid.num_groups(); ++g)
    out[static_cast<std::size_t>(g)] = planck_group(temperature, g, grid, constants);
  return out;
}

// --- opacity ------------------------------------------------------------------

double opacity_spectral(double nu, double temperature, const MaterialModel& material) {
  require_temperature(temperature);
  if (!(nu > 0.0)) throw DomainError("photon energy must be positive");
  const double power =
      material.opacity_exponent == 3.0 ? nu * nu * nu : std::pow(nu, material.opacity_exponent);
  double kappa = material.opacity_coeff / power;
  if (material.stimulated_correction) kappa *= -std::expm1(-nu / temperature);
  return kappa;
}

namespace {

// Planck weight nu^3/(e^{nu/T}-1) divided by e^{-shift/T}; the shift keeps
// cold-temperature weights representable.
double scaled_planck_weight(double nu, double temperature, double shift) {
  return nu * nu * nu * std::exp(-(nu - shift) / temperature) / (-std::expm1(-nu / temperature));
}

struct Moments {
  double num = 0.0;
  double den = 0.0;
};

void accumulate_finite(double lo, double hi, double temperature, double shift,
                       const MaterialModel& material, const GaussRule& rule, Moments& m) {
  const double half = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double nu = mid + half * rule.nodes[q];
    const double w = rule.weights[q] * half * scaled_planck_weight(nu, temperature, shift);
    m.num += w * opacity_spectral(nu, temperature, material);
    m.den += w;
  }
}

// [lo, inf) mapped by nu = lo/u, u in (0, 1].
void accumulate_open(double lo, double temperature, double shift, const MaterialModel& material,
                     const GaussRule& rule, Moments& m) {
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double u = 0.5 * (rule.nodes[q] + 1.0);
    const double nu = lo / u;
    const double jac = 0.5 * lo / (u * u);
    const double w = rule.weights[q] * jac * scaled_planck_weight(nu, temperature, shift);
    if (w == 0.0) continue;
    m.num += w * opacity_spectral(nu, temperature, material);
    m.den += w;
  }
}

const GaussRule& gauss16() {
  static const GaussRule rule = gauss_legendre(16);
  return rule;
}

}  // namespace

double opacity_group(double temperature, int g, const FrequencyGrid& grid,
                     const MaterialModel& material) {
  require_temperature(temperature);
  if (g < 0 || g >= grid.num_groups()) throw ShapeError("group index out of range");
  const double lo = grid.lower(g);
  const double shift = lo;
  Moments m;
  if (grid.open_ended(g)) {
    if (lo > 0.0) {
      accumulate_open(lo, temperature, shift, material, gauss16(), m);
    } else {
      accumulate_finite(0.0, temperature, temperature, shift, material, gauss16(), m);
      accumulate_open(temperature, temperature, shift, material, gauss16(), m);
    }
  } else {
    // Beyond lo + 60 T the weight is below e^-60 of its peak.
    const double hi = std::min(grid.upper(g), lo + 60.0 * temperature);
    accumulate_finite(lo, hi, temperature, shift, material, gauss16(), m);
  }
  if (!(m.den > 0.0)) {
    // Weight underflows only when T is far below the group width; it then
    // concentrates at the lower edge.
    if (lo > 0.0) return opacity_spectral(lo, temperature, material);
    throw DegenerateError("Planck weight vanished in group " + std::to_string(g) + " at T = " + std::to_string(temperature));
  }
  return m.num / m.den;
}

std::vector<double> opacity_groups(double temperature, const FrequencyGrid& grid,
                                   const MaterialModel& material) {
  std::vector<double> out(static_cast<std::size_t>(grid.num_groups()));
  for (int g = 0; g < grid.num_groups(); ++g)
    out[static_cast<std::size_t>(g)] = opacity_group(temperature, g, grid, material);
  return out;
}

}  // namespace ddet::setup
