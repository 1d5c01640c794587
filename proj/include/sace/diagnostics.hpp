#pragma once
#include <array>
#include <span>
#include <string>
#include <vector>

#include "sace/cohort.hpp"
#include "sace/obsmodels.hpp"

namespace sace::diagnostics {

struct LpmlReport {
  double total = 0.0;
  std::vector<double> log_cpo;                  // per record
  std::array<double, kFactorCount> by_factor{};  // Σ log CPO of each factor alone
  double baseline = 0.0;                        // Σ log CPO of the baseline cell term
  size_t n_draws = 0;
  std::vector<double> cpo() const;
};

// Each record contributes the factors it identifies: baseline cell, then per
// wave S and R while retained before, Z/W/Y while observed.
LpmlReport lpml(const PosteriorStack& stack, const CohortDataset& data, int workers = 0);

struct Summary {
  double mean = 0, sd = 0, q025 = 0, q50 = 0, q975 = 0;
  size_t n = 0;
};

// linear interpolation between order statistics
double quantile(std::span<const double> sorted, double p);
Summary summarize(std::span<const double> samples);

struct TraceStat {
  double rhat = 1.0;
  bool flagged = false;
  size_t n_chains = 0, n_per_chain = 0;  // after splitting
};

// split-chain potential scale reduction; flagged above 1.1
TraceStat trace_stats(const std::vector<std::vector<double>>& chains);

}  // namespace sace::diagnostics
