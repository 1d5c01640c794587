#pragma once
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sace/cohort.hpp"
#include "sace/gcomp.hpp"
#include "sace/obsmodels.hpp"

namespace sace::dgp {

enum class Mode { Continuous, Discrete };

// Probit-scale linear predictor pieces. Per-wave vectors have length J+1.
struct Mechanism {
  std::vector<double> intercept;
  std::vector<double> cell;  // per baseline cell
  double lag_y = 0, lag_w = 0, lag_z = 0;
  double cur_w = 0;  // current-wave w (exposure and outcome only)
};

struct DgpConfig {
  Mode mode = Mode::Continuous;
  int waves = 2;  // J
  std::vector<double> baseline;
  Mechanism w, z, s, r, y;
  bool death = true, dropout = true;
  std::vector<double> effect;  // exposure effect on the outcome per wave
  double y_sd = 1.0;           // continuous noise
  double y_center = 0.0, y_scale = 1.0;  // lagged outcome enters as (y - center) / scale
  double nonlinear = 0.0;
  // true sensitivity structure, per wave (entry 0 unused)
  std::vector<double> gamma, gap, xi, nu;

  int n_cells() const { return static_cast<int>(baseline.size()); }
  void validate() const;
  std::string to_text() const;
  static DgpConfig parse(std::string_view text);
};

DgpConfig preset(std::string_view name);
std::vector<std::string> preset_names();

struct LatentRecord {
  // indexed by wave; entry 0 unused
  std::vector<int> as, protected_, alive_ref;
  std::vector<double> y_exp, y_ref;  // NaN when undefined
};

struct LatentTruth {
  std::vector<LatentRecord> people;
  size_t nu_clamped = 0;
};

struct Simulated {
  CohortDataset data;
  LatentTruth truth;
};

Simulated generate_cohort(const DgpConfig& cfg, size_t n, uint64_t seed);

struct OracleValue {
  double tau = 0.0, se = 0.0;
  std::vector<double> p_as, p_protected, contrast, delta;  // indexed by wave
  size_t nu_clamped = 0;
};

OracleValue oracle_sace(const DgpConfig& cfg, size_t M, uint64_t seed);
// exact enumeration of the principal-stratum estimand (discrete mode)
OracleValue oracle_sace_exact(const DgpConfig& cfg, size_t cell_cap = 50'000'000);

struct IdentifiedValue {
  double tau_fp = 0.0, tau_a3 = 0.0;
  std::vector<gcomp::WaveMoments> fp, a3;
  size_t cells = 0;
};

// Enumerates the identification formula with the true observed-data laws.
IdentifiedValue oracle_identified(const DgpConfig& cfg, gcomp::GammaMode mode = gcomp::GammaMode::First,
                                  size_t cell_cap = 50'000'000);

// True observed-data laws as a model draw; the outcome noise sd is that of
// the continuous mechanism (discrete mode reports the law's sd).
class TrueLawModel : public ObservedDataModel {
 public:
  explicit TrueLawModel(DgpConfig cfg);
  int n_waves() const override { return cfg_.waves + 1; }
  int n_cells() const override { return cfg_.n_cells(); }
  double mean_y(int wave, const double* x) const override;
  double sd_y(int wave) const override;
  double prob(Factor f, int wave, const double* x) const override;
  std::span<const double> baseline() const override { return cfg_.baseline; }

  // E[Y_j(z̄) | history, alive under z̄] for an at-risk history
  double potential_mean(int wave, const double* x_y, int z) const;

 private:
  DgpConfig cfg_;
};

std::string truth_json(const DgpConfig& cfg, const Simulated& sim, const OracleValue& oracle);

}  // namespace sace::dgp
