#pragma once

// Mesh, angular quadrature, frequency groups, material model and the Planck /
// opacity evaluations shared by every solver level.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace ddet::setup {

/// Physical constants. Units: cm, ns, keV; energy unit is the jerk (1e9 J).
struct Constants {
  double c = 29.9792458;  ///< speed of light, cm/ns
  double a_r = 0.01372;   ///< radiation constant, jk cm^-3 keV^-4
};

/// Side of the rectangular domain, in the boundary-factor stacking order.
enum class Side : int { kLeft = 0, kBottom = 1, kRight = 2, kTop = 3 };

inline constexpr std::array<Side, 4> kSides = {Side::kLeft, Side::kBottom, Side::kRight,
                                               Side::kTop};

/// Orthogonal 2-D mesh.
///
/// Cells are indexed c = i + nx*j. Vertical faces (normal +x) are indexed
/// v = i + (nx+1)*j with i in [0, nx]; horizontal faces (normal +y) are
/// indexed h = i + nx*j with j in [0, ny]. Face-located arrays that hold both
/// families store the vertical faces first, then the horizontal ones.
class SpatialMesh {
 public:
  SpatialMesh(std::vector<double> dx, std::vector<double> dy);
  static SpatialMesh uniform(int nx, int ny, double dx, double dy);

  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }

  std::size_t num_cells() const noexcept { return static_cast<std::size_t>(nx_) * ny_; }
  std::size_t num_vfaces() const noexcept { return static_cast<std::size_t>(nx_ + 1) * ny_; }
  std::size_t num_hfaces() const noexcept { return static_cast<std::size_t>(nx_) * (ny_ + 1); }
  std::size_t num_faces() const noexcept { return num_vfaces() + num_hfaces(); }

  double dx(int i) const { return dx_[static_cast<std::size_t>(i)]; }
  double dy(int j) const { return dy_[static_cast<std::size_t>(j)]; }
  const std::vector<double>& dx() const noexcept { return dx_; }
  const std::vector<double>& dy() const noexcept { return dy_; }

  std::size_t cell(int i, int j) const noexcept {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx_) * j;
  }
  std::size_t vface(int i, int j) const noexcept {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx_ + 1) * j;
  }
  std::size_t hface(int i, int j) const noexcept {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx_) * j;
  }

  /// Index into a combined face array (vertical then horizontal).
  std::size_t face_of_cell(int i, int j, Side side) const noexcept;

  double cell_area(int i, int j) const { return dx(i) * dy(j); }
  /// Area of the half-cell owning a face; half the owning cell area.
  double half_cell_area(int i, int j) const { return 0.5 * cell_area(i, j); }
  /// Length of the face on the given side of cell (i, j).
  double face_length(int i, int j, Side side) const;

  double width() const;
  double height() const;
  double total_area() const;

  /// Number of boundary faces on a side (ny for left/right, nx for bottom/top).
  int side_length(Side side) const noexcept {
    return (side == Side::kLeft || side == Side::kRight) ? ny_ : nx_;
  }
  /// Combined face index of the k-th boundary face of a side, counted along +x or +y.
  std::size_t boundary_face(Side side, int k) const noexcept;
  /// Cell adjacent to the k-th boundary face of a side.
  std::size_t boundary_cell(Side side, int k) const noexcept;

 private:
  int nx_ = 0;
  int ny_ = 0;
  std::vector<double> dx_;
  std::vector<double> dy_;
};

/// One discrete ordinate.
struct Direction {
  double ox = 0.0;
  double oy = 0.0;
  double oz = 0.0;
  double weight = 0.0;
};

/// Requested angular set.
///
/// kS2 is the four-direction (+-1/sqrt3, +-1/sqrt3, 1/sqrt3) set. kTriangular
/// with order n has n(n+1)/2 directions per quadrant; kProduct has
/// polar*azimuthal per quadrant.
struct QuadratureSpec {
  enum class Family { kS2, kTriangular, kProduct };
  Family family = Family::kTriangular;
  int polar = 8;
  int azimuthal = 0;

  int per_quadrant() const;
  std::string to_string() const;
  /// Accepts "s2", "triangular-N", "product-PxA" or a bare per-quadrant count
  /// ("36" -> triangular-8, "4" -> product-2x2).
  static QuadratureSpec parse(const std::string& text);
};

/// Directions on the upper (Omega_z > 0) hemisphere; weights are doubled so
/// that they integrate the full sphere of a z-symmetric 2-D problem.
class AngularQuadrature {
 public:
  explicit AngularQuadrature(std::vector<Direction> dirs);

  std::size_t size() const noexcept { return dirs_.size(); }
  const Direction& operator[](std::size_t m) const { return dirs_[m]; }
  const std::vector<Direction>& directions() const noexcept { return dirs_; }

 private:
  std::vector<Direction> dirs_;
};

AngularQuadrature build_quadrature(const QuadratureSpec& spec);

/// Group boundaries nu_0 = 0 < nu_1 < ... < nu_G in keV. The last boundary is
/// treated as infinity when it is at least kInfiniteEdge.
class FrequencyGrid {
 public:
  static constexpr double kInfiniteEdge = 1.0e7;

  /// `upper` lists nu_1..nu_G; nu_0 = 0 is implicit.
  explicit FrequencyGrid(std::vector<double> upper);

  int num_groups() const noexcept { return static_cast<int>(edges_.size()) - 1; }
  double lower(int g) const { return edges_[static_cast<std::size_t>(g)]; }
  double upper(int g) const { return edges_[static_cast<std::size_t>(g) + 1]; }
  bool open_ended(int g) const { return upper(g) >= kInfiniteEdge; }
  const std::vector<double>& edges() const noexcept { return edges_; }

 private:
  std::vector<double> edges_;
};

/// Opacity law kappa_nu = coeff / nu^exponent * (1 - exp(-nu/T)) and a linear
/// material energy density eps(T) = cv * T.
struct MaterialModel {
  double opacity_coeff = 27.0;
  double opacity_exponent = 3.0;
  bool stimulated_correction = true;
  double cv = 0.5917 * 0.01372;
  Constants constants{};
};

/// Lowest admissible temperature; anything below is rejected.
inline constexpr double kMinTemperature = 1.0e-8;

/// Integral of x^3/(e^x - 1) over [a, b] (b may be +infinity).
double planck_integral(double a, double b);

/// Group Planck function B_g(T) (per steradian), normalized so that
/// sum_g 4*pi*B_g(T) = a_R * c * T^4 when the groups span (0, inf).
double planck_group(double temperature, int g, const FrequencyGrid& grid,
                    const Constants& constants = {});

/// All groups at once.
std::vector<double> planck_groups(double temperature, const FrequencyGrid& grid,
                                  const Constants& constants = {});

/// Spectral opacity at photon energy nu (keV).
double opacity_spectral(double nu, double temperature, const MaterialModel& material);

/// Planck-averaged group opacity with 16-point Gauss-Legendre per group.
double opacity_group(double temperature, int g, const FrequencyGrid& grid,
                     const MaterialModel& material);

std::vector<double> opacity_groups(double temperature, const FrequencyGrid& grid,
                                   const MaterialModel& material);

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussRule gauss_legendre(int n);

/// Throws DomainError when T is not a usable temperature.
void require_temperature(double temperature);

}  // namespace ddet::setup
