#include "sace/sensitivity.hpp"

#include <cmath>

#include "sace/error.hpp"

namespace sace {

void SensitivityBounds::validate() const {
  size_t n = xi_upper.size();
  if (gamma_lower.size() != n || delta_upper.size() != n || nu_upper.size() != n)
    fail(ErrorKind::InvalidArgument, "sensitivity bounds have inconsistent lengths");
  for (size_t j = 0; j < n; ++j) {
    if (!(xi_upper[j] >= 0 && gamma_lower[j] >= 0 && delta_upper[j] >= 0 && nu_upper[j] >= 0))
      fail(ErrorKind::InvalidArgument, "sensitivity bounds must be non-negative");
    if (nu_upper[j] > 1) fail(ErrorKind::InvalidArgument, "nu bound must be <= 1");
  }
}

SensitivityBounds compute_bounds(const CohortDataset& data) {
  SensitivityBounds b;
  size_t n = static_cast<size_t>(data.n_waves);
  b.xi_upper.assign(n, 0.0);
  b.gamma_lower.assign(n, 0.0);
  b.delta_upper.assign(n, 0.0);
  b.nu_upper.assign(n, 0.0);
  for (int j = 1; j < data.n_waves; ++j) {
    std::vector<double> ys;
    size_t at_risk = 0, newly = 0;
    for (const auto& p : data.people) {
      bool obs = true;
      for (int k = 0; k <= j; ++k)
        if (p.waves[static_cast<size_t>(k)].r != 1 || p.waves[static_cast<size_t>(k)].s != 1) obs = false;
      if (!obs) continue;
      const auto& cur = p.waves[static_cast<size_t>(j)];
      if (cur.y) ys.push_back(*cur.y);
      if (p.waves[static_cast<size_t>(j - 1)].z.value_or(1) == 0) {
        ++at_risk;
        newly += cur.z.value_or(0) == 1;
      }
    }
    if (ys.size() < 2)
      fail(ErrorKind::Validation, "wave " + std::to_string(j) + " has fewer than 2 observed outcomes");
    double mean = 0;
    for (double v : ys) mean += v;
    mean /= static_cast<double>(ys.size());
    double ss = 0;
    for (double v : ys) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / static_cast<double>(ys.size() - 1));
    auto jj = static_cast<size_t>(j);
    b.xi_upper[jj] = 0.5 * sd;
    b.gamma_lower[jj] = sd;
    b.delta_upper[jj] = sd;
    b.nu_upper[jj] = at_risk ? nu_upper(static_cast<double>(newly) / static_cast<double>(at_risk)) : 1.0;
  }
  return b;
}

double nu_upper(double pi_z) { return 1.0 - pi_z; }

SensitivityDraw zero_sensitivity(int n_waves) {
  SensitivityDraw d;
  size_t n = static_cast<size_t>(n_waves);
  d.xi.assign(n, 0.0);
  d.gamma.assign(n, 0.0);
  d.delta.assign(n, 0.0);
  d.nu.assign(n, 0.0);
  return d;
}

SensitivityDraw sample_sensitivity(const SensitivityBounds& b, rng::Engine& rng) {
  auto d = zero_sensitivity(b.n_waves());
  for (size_t j = 1; j < d.xi.size(); ++j) {
    d.xi[j] = b.xi_upper[j] * rng.uniform();
    d.gamma[j] = -b.gamma_lower[j] * rng.uniform();
    d.delta[j] = b.delta_upper[j] * rng.uniform();
    d.nu[j] = b.nu_upper[j] * rng.uniform();
  }
  return d;
}

bool within(const SensitivityDraw& d, const SensitivityBounds& b) {
  for (size_t j = 0; j < d.xi.size(); ++j) {
    if (d.xi[j] < 0 || d.xi[j] > b.xi_upper[j]) return false;
    if (d.gamma[j] > 0 || d.gamma[j] < -b.gamma_lower[j]) return false;
    if (d.delta[j] < 0 || d.delta[j] > b.delta_upper[j]) return false;
    if (d.nu[j] < 0 || d.nu[j] > b.nu_upper[j]) return false;
  }
  return true;
}

SensitivityDraw SensitivitySource::draw(uint64_t chain_seed, int m) const {
  switch (mode) {
    case SensitivityMode::Zero: return zero_sensitivity(n_waves);
    case SensitivityMode::Fixed: return fixed;
    case SensitivityMode::Prior: break;
  }
  rng::Engine eng(rng::derive(chain_seed, rng::Purpose::Sensitivity, {static_cast<uint64_t>(m)}));
  return sample_sensitivity(bounds, eng);
}

}  // namespace sace
