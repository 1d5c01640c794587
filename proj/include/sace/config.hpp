#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sace/bart.hpp"
#include "sace/baselines.hpp"
#include "sace/cohort.hpp"
#include "sace/gcomp.hpp"
#include "sace/obsmodels.hpp"
#include "sace/sensitivity.hpp"

namespace sace {

// Plain key=value run configuration; see README for the key list.
struct RunConfig {
  std::string dataset, out;
  uint64_t seed = 1;
  int chains = 204, burn = 1000, keep = 2040, thin = 1;  // keep is the total over chains
  long long n_pseudo = 25000;
  int blocks = 25;
  gcomp::ChiVariant chi = gcomp::ChiVariant::FirstPrinciples;
  gcomp::GammaMode gamma = gcomp::GammaMode::First;
  gcomp::Estimand estimand = gcomp::Estimand::Sace;
  SensitivityMode sensitivity = SensitivityMode::Prior;
  // overrides, per follow-up wave 1..J; empty = derived from data
  std::vector<double> bound_xi, bound_gamma, bound_delta, bound_nu;
  std::vector<double> fixed_xi, fixed_gamma, fixed_delta, fixed_nu;
  std::array<bart::BartConfig, kFactorCount> bart{};
  double glm_prior_sd = 10.0;
  bool run_bsp = true, run_bpgc = true, run_iptw_w = true, run_iptw_sw = true;
  int bootstrap = 5000;
  int workers = 0;

  void validate() const;
  int keep_per_chain() const;

  std::string to_text() const;
  static RunConfig parse(std::string_view text);
  static RunConfig parse(std::string_view text, const RunConfig& base);
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static std::vector<std::string> keys();
  uint64_t hash() const;
  // the keys that determine a fitted stack
  std::string fit_text() const;

  StackOptions stack_options() const;
  baselines::GlmStackOptions glm_options() const;
  gcomp::GcompOptions gcomp_options() const;
  SensitivitySource sensitivity_source(const CohortDataset& data) const;
};

const char* to_string(SensitivityMode m);
SensitivityMode parse_sensitivity_mode(std::string_view s);

}  // namespace sace
