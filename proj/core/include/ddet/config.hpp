#pragma once

// Problem configuration: named presets and JSON config files.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "ddet/problem.hpp"

namespace ddet::setup {

/// Iteration controls for every solver level.
struct Tolerances {
  double outer_rel = 1e-14;  ///< FOM outer loop, max-norm relative change of T and E
  double outer_abs = 1e-15;
  int outer_max = 200;
  double rom_eps1 = 1e-14;  ///< ROM inner loop, 2-norm criterion
  double rom_eps2 = 1e-15;
  int rom_max = 200;
  double newton_tol = 1e-13;  ///< grey Newton, scaled max-norm residual
  int newton_max = 100;
};

struct RunConfig {
  std::string name = "custom";

  int nx = 20;
  int ny = 20;
  double dx = 0.3;  ///< cm
  double dy = 0.3;
  std::vector<double> group_upper;  ///< nu_1..nu_G, keV
  std::string quadrature = "triangular-8";

  double opacity_coeff = 27.0;
  double opacity_exponent = 3.0;
  bool stimulated_correction = true;
  double cv_coeff = 0.5917;  ///< c_v = cv_coeff * a_R * T_in^3
  Constants constants{};

  double t_initial = 0.001;  ///< keV
  double t_inflow = 1.0;     ///< keV
  /// Sides (L, B, R, T) that receive isotropic blackbody radiation at t_inflow.
  std::array<bool, 4> hot_sides = {true, false, false, false};

  double t0 = 0.0;  ///< ns
  double dt = 0.02;
  int num_steps = 300;

  Tolerances tol{};
  int threads = 1;

  SpatialMesh mesh() const;
  FrequencyGrid grid() const;
  QuadratureSpec quadrature_spec() const;
  MaterialModel material() const;

  /// Throws ConfigError when a parameter is out of range.
  void validate() const;
};

/// Upper group boundaries of the 17-group F-C spectrum (keV).
const std::vector<double>& fleck_cummings_groups();

/// "fleck-cummings-2d", "fleck-cummings-desk" or "equilibrium".
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Parses a JSON document. A "preset" key selects the base configuration;
/// every other key overrides a single field.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// JSON form of a configuration (round-trips through parse_config).
std::string to_json(const RunConfig& config);

}  // namespace ddet::setup
