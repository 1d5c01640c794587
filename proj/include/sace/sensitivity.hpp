#pragma once
#include <cstdint>
#include <vector>

#include "sace/cohort.hpp"
#include "sace/rng.hpp"

namespace sace {

// Per-wave vectors of length n_waves; entry 0 is unused and kept at 0.
struct SensitivityBounds {
  std::vector<double> xi_upper, gamma_lower, delta_upper, nu_upper;
  int n_waves() const { return static_cast<int>(xi_upper.size()); }
  void validate() const;
};

// xi in [0,U], gamma in [-L,0], delta in [0,U], nu in [0,U]. nu refers to
// exposure value 1; see gcomp for the per-history clamp and regime sign.
struct SensitivityDraw {
  std::vector<double> xi, gamma, delta, nu;
  int n_waves() const { return static_cast<int>(xi.size()); }
};

SensitivityBounds compute_bounds(const CohortDataset& data);
double nu_upper(double pi_z);
SensitivityDraw sample_sensitivity(const SensitivityBounds& b, rng::Engine& rng);
SensitivityDraw zero_sensitivity(int n_waves);
bool within(const SensitivityDraw& d, const SensitivityBounds& b);

enum class SensitivityMode { Prior, Fixed, Zero };

struct SensitivitySource {
  SensitivityMode mode = SensitivityMode::Prior;
  int n_waves = 0;
  SensitivityBounds bounds;  // used in Prior mode
  SensitivityDraw fixed;
  SensitivityDraw draw(uint64_t chain_seed, int m) const;
};

}  // namespace sace
