#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "ddet/errors.hpp"
#include "ddet/problem.hpp"

namespace ddet::setup {

namespace {

constexpr double kPi = std::numbers::pi;

// Nodes and weights of one quadrant's azimuthal rule on [0, pi/2]. Weights
// sum to pi/2 and are symmetric about pi/4.
struct AzimuthalRule {
  std::vector<double> phi;
  std::vector<double> weight;
  double cos_moment = 0.0;  // sum w cos(phi); exact value is 1
};

AzimuthalRule azimuthal_rule(int n) {
  AzimuthalRule rule;
  if (n == 1) {
    rule.phi = {0.25 * kPi};
    rule.weight = {0.5 * kPi};
  } else if (n == 2) {
    // (pi/4)(cos p + sin p) = 1  ->  p = asin(4/(pi sqrt2)) - pi/4.
    const double p = std::asin(4.0 / (kPi * std::numbers::sqrt2)) - 0.25 * kPi;
    rule.phi = {p, 0.5 * kPi - p};
    rule.weight = {0.25 * kPi, 0.25 * kPi};
  } else {
    const auto count = static_cast<std::size_t>(n);
    rule.phi.resize(count);
    rule.weight.assign(count, 0.5 * kPi / n);
    std::vector<double> sym(count);
    for (std::size_t k = 0; k < count; ++k) {
      rule.phi[k] = (static_cast<double>(k) + 0.5) * kPi / (2.0 * n);
      sym[k] = 0.5 * (std::cos(rule.phi[k]) + std::sin(rule.phi[k]));
    }
    // Shift the weights along the symmetric, zero-sum direction (sym - mean)
    // until the half-range first moment is exact.
    const double mean = std::accumulate(sym.begin(), sym.end(), 0.0) / n;
    double current = 0.0;
    double gain = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      current += rule.weight[k] * std::cos(rule.phi[k]);
      gain += (sym[k] - mean) * std::cos(rule.phi[k]);
    }
    const double t = (1.0 - current) / gain;
    for (std::size_t k = 0; k < count; ++k) {
      rule.weight[k] += t * (sym[k] - mean);
      if (!(rule.weight[k] > 0.0)) throw ConfigError("azimuthal weight correction lost positivity");
    }
  }
  for (std::size_t k = 0; k < rule.phi.size(); ++k)
    rule.cos_moment += rule.weight[k] * std::cos(rule.phi[k]);
  return rule;
}

struct PolarRule {
  std::vector<double> mu;
  std::vector<double> weight;  // sums to 1 over the upper hemisphere
};

// Polar rule satisfying sum w = 1, sum w mu^2 = 1/3 and
// sum w sqrt(1-mu^2) a_l = pi/4, where a_l is the azimuthal cos-moment of level l.
PolarRule polar_rule(int n, const std::vector<double>& cos_moment) {
  PolarRule rule;
  const auto count = static_cast<std::size_t>(n);
  if (n == 2) {
    const double mu1 = 0.5 * (1.0 - 1.0 / std::numbers::sqrt3);
    const auto residual = [&](double mu2, double& w1) {
      w1 = (mu2 * mu2 - 1.0 / 3.0) / (mu2 * mu2 - mu1 * mu1);
      return w1 * std::sqrt(1.0 - mu1 * mu1) * cos_moment[0] +
             (1.0 - w1) * std::sqrt(1.0 - mu2 * mu2) * cos_moment[1] - 0.25 * kPi;
    };
    double lo = 1.0 / std::numbers::sqrt3 + 1e-12;
    double hi = 1.0 - 1e-12;
    double w1 = 0.0;
    if (residual(lo, w1) * residual(hi, w1) > 0.0)
      throw ConfigError("no moment-matched two-level polar rule exists");
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (residual(mid, w1) * residual(lo, w1) > 0.0)
        lo = mid;
      else
        hi = mid;
    }
    const double mu2 = 0.5 * (lo + hi);
    residual(mu2, w1);
    rule.mu = {mu1, mu2};
    rule.weight = {w1, 1.0 - w1};
    return rule;
  }

  const GaussRule gl = gauss_legendre(n);
  rule.mu.resize(count);
  rule.weight.resize(count);
  for (std::size_t l = 0; l < count; ++l) {
    rule.mu[l] = 0.5 * (gl.nodes[l] + 1.0);
    rule.weight[l] = 0.5 * gl.weights[l];
  }
  // Smallest relative change (norm sum d^2/w) that keeps sum w and sum w mu^2
  // and fixes the half-range moment: d = t W r with r = g - c0 - c2 mu^2.
  std::vector<double> g(count);
  double current = 0.0;
  double s0 = 0.0, s2 = 0.0, s4 = 0.0, g0 = 0.0, g2 = 0.0;
  for (std::size_t l = 0; l < count; ++l) {
    const double m2 = rule.mu[l] * rule.mu[l];
    const double w = rule.weight[l];
    g[l] = std::sqrt(1.0 - m2) * cos_moment[l];
    current += w * g[l];
    s0 += w;
    s2 += w * m2;
    s4 += w * m2 * m2;
    g0 += w * g[l];
    g2 += w * g[l] * m2;
  }
  const double det = s0 * s4 - s2 * s2;
  const double c0 = (g0 * s4 - g2 * s2) / det;
  const double c2 = (s0 * g2 - s2 * g0) / det;
  std::vector<double> r(count);
  double gain = 0.0;
  for (std::size_t l = 0; l < count; ++l) {
    r[l] = rule.weight[l] * (g[l] - c0 - c2 * rule.mu[l] * rule.mu[l]);
    gain += r[l] * g[l];
  }
  const double t = (0.25 * kPi - current) / gain;
  for (std::size_t l = 0; l < count; ++l) {
    rule.weight[l] += t * r[l];
    if (!(rule.weight[l] > 0.0)) throw ConfigError("polar weight correction lost positivity");
  }
  return rule;
}

AngularQuadrature s2_set() {
  const double a = 1.0 / std::numbers::sqrt3;
  std::vector<Direction> dirs;
  for (double sy : {1.0, -1.0})
    for (double sx : {1.0, -1.0}) dirs.push_back({sx * a, sy * a, a, kPi});
  return AngularQuadrature(std::move(dirs));
}

}  // namespace

GaussRule gauss_legendre(int n) {
  if (n < 1) throw ConfigError("Gauss-Legendre order must be positive");
  GaussRule rule;
  const auto count = static_cast<std::size_t>(n);
  rule.nodes.resize(count);
  rule.weights.resize(count);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged node.
    double p0 = 1.0;
    double p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const auto idx = static_cast<std::size_t>(n - 1 - i);
    rule.nodes[idx] = x;
    rule.weights[idx] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

int QuadratureSpec::per_quadrant() const {
  switch (family) {
    case Family::kS2: return 1;
    case Family::kTriangular: return polar * (polar + 1) / 2;
    case Family::kProduct: return polar * azimuthal;
  }
  return 0;
}

std::string QuadratureSpec::to_string() const {
  switch (family) {
    case Family::kS2: return "s2";
    case Family::kTriangular: return "triangular-" + std::to_string(polar);
    case Family::kProduct:
      return "product-" + std::to_string(polar) + "x" + std::to_string(azimuthal);
  }
  return {};
}

QuadratureSpec QuadratureSpec::parse(const std::string& text) {
  QuadratureSpec spec;
  const auto bad = [&] { return ConfigError("unsupported quadrature spec '" + text + "'"); };
  try {
    if (text == "s2") {
      spec.family = Family::kS2;
      spec.polar = 1;
      spec.azimuthal = 1;
    } else if (text.rfind("triangular-", 0) == 0) {
      spec.family = Family::kTriangular;
      spec.polar = std::stoi(text.substr(11));
    } else if (text.rfind("product-", 0) == 0) {
      const auto x = text.find('x', 8);
      if (x == std::string::npos) throw bad();
      spec.family = Family::kProduct;
      spec.polar = std::stoi(text.substr(8, x - 8));
      spec.azimuthal = std::stoi(text.substr(x + 1));
    } else {
      std::size_t used = 0;
      const int n = std::stoi(text, &used);
      if (used != text.size() || n < 1) throw bad();
      if (n == 1) return parse("s2");
      for (int p = 1; p * (p + 1) / 2 <= n; ++p)
        if (p * (p + 1) / 2 == n) {
          spec.family = Family::kTriangular;
          spec.polar = p;
          return spec;
        }
      const int r = static_cast<int>(std::lround(std::sqrt(n)));
      if (r * r != n) throw bad();
      spec.family = Family::kProduct;
      spec.polar = r;
      spec.azimuthal = r;
    }
  } catch (const std::invalid_argument&) {
    throw bad();
  } catch (const std::out_of_range&) {
    throw bad();
  }
  if (spec.polar < 1 || (spec.family == Family::kProduct && spec.azimuthal < 1)) throw bad();
  return spec;
}

AngularQuadrature::AngularQuadrature(std::vector<Direction> dirs) : dirs_(std::move(dirs)) {
  if (dirs_.empty()) throw ConfigError("empty angular quadrature");
  for (const auto& d : dirs_)
    if (!(d.weight > 0.0)) throw ConfigError("quadrature weights must be positive");
}

AngularQuadrature build_quadrature(const QuadratureSpec& spec) {
  if (spec.per_quadrant() == 1) return s2_set();
  const int levels = spec.polar;
  if (levels < 1 || levels > 64) throw ConfigError("unsupported quadrature order");

  // Level l (ascending mu) gets `levels - l` azimuthal points on the triangle.
  std::vector<AzimuthalRule> azimuth(static_cast<std::size_t>(levels));
  std::vector<double> cos_moment(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    const int count = spec.family == QuadratureSpec::Family::kProduct ? spec.azimuthal : levels - l;
    if (count < 1) throw ConfigError("unsupported quadrature spec " + spec.to_string());
    azimuth[static_cast<std::size_t>(l)] = azimuthal_rule(count);
    cos_moment[static_cast<std::size_t>(l)] = azimuth[static_cast<std::size_t>(l)].cos_moment;
  }
  const PolarRule polar = polar_rule(levels, cos_moment);

  std::vector<Direction> dirs;
  dirs.reserve(static_cast<std::size_t>(4 * spec.per_quadrant()));
  for (double sy : {1.0, -1.0}) {
    for (double sx : {1.0, -1.0}) {
      for (int l = 0; l < levels; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        const double mu = polar.mu[ul];
        const double sin_theta = std::sqrt(1.0 - mu * mu);
        const auto& az = azimuth[ul];
        for (std::size_t k = 0; k < az.phi.size(); ++k) {
          dirs.push_back({sx * sin_theta * std::cos(az.phi[k]), sy * sin_theta * std::sin(az.phi[k]),
                          mu, 2.0 * polar.weight[ul] * az.weight[k]});
        }
      }
    }
  }
  return AngularQuadrature(std::move(dirs));
}

}  // namespace ddet::setup
