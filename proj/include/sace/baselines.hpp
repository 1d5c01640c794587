#pragma once
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sace/cohort.hpp"
#include "sace/gcomp.hpp"
#include "sace/glm.hpp"
#include "sace/obsmodels.hpp"

namespace sace::baselines {

struct GlmFactorDraws {
  Factor factor = Factor::Y;
  int wave = 0;
  FeatureLayout layout;
  std::vector<std::vector<glm::GlmDraw>> chains;  // [chain][m]
};

class GlmStack : public PosteriorStack {
 public:
  int waves = 0, cells = 1, chains = 0, keep = 0;
  std::vector<GlmFactorDraws> factors;
  std::vector<std::vector<std::vector<double>>> baseline_draws;
  std::vector<std::string> notes;

  int n_waves() const override { return waves; }
  int n_cells() const override { return cells; }
  int n_chains() const override { return chains; }
  int n_keep() const override { return keep; }
  std::unique_ptr<ObservedDataModel> draw(int chain, int m) const override;
  std::vector<std::string> warnings() const override { return notes; }
  const GlmFactorDraws* find(Factor f, int wave) const;
};

struct GlmStackOptions {
  glm::GlmConfig glm{};  // seed ignored
  int n_chains = 1;
  uint64_t seed = 1;
  int workers = 0;
};

GlmStack fit_glm_stack(const CohortDataset& data, const GlmStackOptions& opts);

gcomp::SaceResult bpgc_estimate(const CohortDataset& data, const GlmStackOptions& fit, const SensitivitySource& sens,
                                const gcomp::GcompOptions& opt);

// indexed [individual][wave]; 0 where undefined
struct WeightTable {
  bool stabilized = false;
  std::vector<std::vector<double>> treatment, censoring, combined;
  std::vector<std::vector<int>> defined;
};

struct IptwResult {
  std::string method;
  double estimate = 0.0, lo = 0.0, hi = 0.0;
  bool has_ci = false;
  std::vector<double> contrasts, surv;  // indexed by wave
  std::vector<double> boot;
  size_t boot_failed = 0;
  std::vector<std::string> warnings;
  WeightTable weights;
};

IptwResult iptw_estimate(const CohortDataset& data, bool stabilized, int bootstrap_B, uint64_t seed = 1, int workers = 0);
WeightTable iptw_weights(const CohortDataset& data, bool stabilized);

double pooled_effect(std::span<const double> contrasts, std::span<const double> surv);

}  // namespace sace::baselines
