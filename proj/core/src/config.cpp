#include "ddet/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ddet/errors.hpp"

namespace ddet::setup {

using nlohmann::json;

const std::vector<double>& fleck_cummings_groups() {
  static const std::vector<double> edges = {0.7075, 1.415, 2.123, 2.830, 3.538, 4.245,
                                            5.129,  6.014, 6.898, 7.783, 8.667, 9.551,
                                            10.44,  11.32, 12.20, 13.09, 1.0e7};
  return edges;
}

SpatialMesh RunConfig::mesh() const { return SpatialMesh::uniform(nx, ny, dx, dy); }

FrequencyGrid RunConfig::grid() const { return FrequencyGrid(group_upper); }

QuadratureSpec RunConfig::quadrature_spec() const { return QuadratureSpec::parse(quadrature); }

MaterialModel RunConfig::material() const {
  MaterialModel m;
  m.opacity_coeff = opacity_coeff;
  m.opacity_exponent = opacity_exponent;
  m.stimulated_correction = stimulated_correction;
  m.cv = cv_coeff * constants.a_r * t_inflow * t_inflow * t_inflow;
  m.constants = constants;
  return m;
}

void RunConfig::validate() const {
  const auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (nx < 1 || ny < 1) throw ConfigError("nx and ny must be at least 1");
  if (!positive(dx) || !positive(dy)) throw ConfigError("dx and dy must be positive");
  if (!positive(dt)) throw ConfigError("dt must be positive");
  if (num_steps < 1) throw ConfigError("num_steps must be at least 1");
  if (!positive(opacity_coeff) || !std::isfinite(opacity_exponent))
    throw ConfigError("opacity parameters must be positive and finite");
  if (!positive(cv_coeff)) throw ConfigError("cv_coeff must be positive");
  if (!positive(constants.c) || !positive(constants.a_r))
    throw ConfigError("physical constants must be positive");
  if (!(t_initial >= kMinTemperature) || !(t_inflow >= kMinTemperature))
    throw ConfigError("temperatures must be at least 1e-8 keV");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (!std::isfinite(t0)) throw ConfigError("t0 must be finite");
  (void)grid();
  (void)quadrature_spec();
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.name = name;
  c.group_upper = fleck_cummings_groups();
  if (name == "fleck-cummings-2d") return c;
  if (name == "fleck-cummings-desk") {
    // Same 6 cm domain at half the resolution; four groups covering the
    // 17-group range.
    c.nx = c.ny = 10;
    c.dx = c.dy = 0.6;
    c.group_upper = {0.7075, 2.830, 6.898, 1.0e7};
    c.quadrature = "product-2x2";
    c.num_steps = 50;
    return c;
  }
  if (name == "equilibrium") {
    c.nx = c.ny = 4;
    c.dx = c.dy = 1.5;
    c.group_upper = {0.7075, 2.830, 6.898, 1.0e7};
    c.quadrature = "product-2x2";
    c.num_steps = 5;
    c.t_initial = c.t_inflow;
    c.hot_sides = {true, true, true, true};
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() {
  return {"fleck-cummings-2d", "fleck-cummings-desk", "equilibrium"};
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

const std::array<const char*, 4> kSideNames = {"left", "bottom", "right", "top"};

}  // namespace

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  static const std::vector<std::string> known = {
      "preset", "name", "nx", "ny", "dx", "dy", "group_upper", "quadrature", "opacity_coeff",
      "opacity_exponent", "stimulated_correction", "cv_coeff", "c", "a_r", "t_initial",
      "t_inflow", "hot_sides", "t0", "dt", "num_steps", "tolerances", "threads"};
  for (const auto& item : j.items())
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      throw ConfigError("unknown config key '" + item.key() + "'");

  RunConfig c = preset(j.value("preset", std::string("fleck-cummings-2d")));
  read(j, "name", c.name);
  read(j, "nx", c.nx);
  read(j, "ny", c.ny);
  read(j, "dx", c.dx);
  read(j, "dy", c.dy);
  read(j, "group_upper", c.group_upper);
  read(j, "quadrature", c.quadrature);
  read(j, "opacity_coeff", c.opacity_coeff);
  read(j, "opacity_exponent", c.opacity_exponent);
  read(j, "stimulated_correction", c.stimulated_correction);
  read(j, "cv_coeff", c.cv_coeff);
  read(j, "c", c.constants.c);
  read(j, "a_r", c.constants.a_r);
  read(j, "t_initial", c.t_initial);
  read(j, "t_inflow", c.t_inflow);
  read(j, "t0", c.t0);
  read(j, "dt", c.dt);
  read(j, "num_steps", c.num_steps);
  read(j, "threads", c.threads);
  if (j.contains("hot_sides")) {
    std::vector<std::string> sides;
    read(j, "hot_sides", sides);
    c.hot_sides = {false, false, false, false};
    for (const auto& s : sides) {
      const auto it = std::find(kSideNames.begin(), kSideNames.end(), s);
      if (it == kSideNames.end()) throw ConfigError("unknown side '" + s + "'");
      c.hot_sides[static_cast<std::size_t>(it - kSideNames.begin())] = true;
    }
  }
  if (j.contains("tolerances")) {
    const json& t = j.at("tolerances");
    if (!t.is_object()) throw ConfigError("'tolerances' must be an object");
    read(t, "outer_rel", c.tol.outer_rel);
    read(t, "outer_abs", c.tol.outer_abs);
    read(t, "outer_max", c.tol.outer_max);
    read(t, "rom_eps1", c.tol.rom_eps1);
    read(t, "rom_eps2", c.tol.rom_eps2);
    read(t, "rom_max", c.tol.rom_max);
    read(t, "newton_tol", c.tol.newton_tol);
    read(t, "newton_max", c.tol.newton_max);
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_json(const RunConfig& c) {
  json j;
  j["name"] = c.name;
  j["nx"] = c.nx;
  j["ny"] = c.ny;
  j["dx"] = c.dx;
  j["dy"] = c.dy;
  j["group_upper"] = c.group_upper;
  j["quadrature"] = c.quadrature;
  j["opacity_coeff"] = c.opacity_coeff;
  j["opacity_exponent"] = c.opacity_exponent;
  j["stimulated_correction"] = c.stimulated_correction;
  j["cv_coeff"] = c.cv_coeff;
  j["c"] = c.constants.c;
  j["a_r"] = c.constants.a_r;
  j["t_initial"] = c.t_initial;
  j["t_inflow"] = c.t_inflow;
  std::vector<std::string> sides;
  for (std::size_t s = 0; s < 4; ++s)
    if (c.hot_sides[s]) sides.emplace_back(kSideNames[s]);
  j["hot_sides"] = sides;
  j["t0"] = c.t0;
  j["dt"] = c.dt;
  j["num_steps"] = c.num_steps;
  j["threads"] = c.threads;
  j["tolerances"] = {{"outer_rel", c.tol.outer_rel}, {"outer_abs", c.tol.outer_abs},
                     {"outer_max", c.tol.outer_max}, {"rom_eps1", c.tol.rom_eps1},
                     {"rom_eps2", c.tol.rom_eps2},   {"rom_max", c.tol.rom_max},
                     {"newton_tol", c.tol.newton_tol}, {"newton_max", c.tol.newton_max}};
  return j.dump(2);
}

}  // namespace ddet::setup
