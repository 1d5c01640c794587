#pragma once
#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sace/bart.hpp"
#include "sace/cohort.hpp"
#include "sace/rng.hpp"

namespace sace {

// One joint posterior draw of every factor of the observed-data model.
// Feature vectors are encoded with layout_for(factor, wave, n_cells).
class ObservedDataModel {
 public:
  virtual ~ObservedDataModel() = default;
  virtual int n_waves() const = 0;
  virtual int n_cells() const = 0;
  virtual double mean_y(int wave, const double* x) const = 0;
  virtual double sd_y(int wave) const = 0;
  virtual double prob(Factor f, int wave, const double* x) const = 0;
  virtual std::span<const double> baseline() const = 0;
};

double cond_mean_y(const ObservedDataModel& m, int wave, const HistoryView& h);
double cond_prob(const ObservedDataModel& m, Factor f, int wave, const HistoryView& h);
std::vector<int> sample_baseline(std::span<const double> pi, size_t n, rng::Engine& rng);

// A set of aligned posterior draws, chain by chain.
class PosteriorStack {
 public:
  virtual ~PosteriorStack() = default;
  virtual int n_waves() const = 0;
  virtual int n_cells() const = 0;
  virtual int n_chains() const = 0;
  virtual int n_keep() const = 0;  // per chain
  virtual std::unique_ptr<ObservedDataModel> draw(int chain, int m) const = 0;
  virtual std::vector<std::string> warnings() const = 0;
};

struct StackOptions {
  std::array<bart::BartConfig, kFactorCount> bart{};  // per factor; seed field is ignored
  int n_chains = 1;
  uint64_t seed = 1;
  int workers = 0;
};

struct FactorDraws {
  Factor factor = Factor::Y;
  int wave = 0;
  FeatureLayout layout;
  std::vector<uint64_t> seeds;                       // per chain
  std::vector<std::vector<bart::ForestDraw>> chains;  // [chain][m]
};

class BartStack : public PosteriorStack {
 public:
  int waves = 0, cells = 1, chains = 0, keep = 0;
  std::vector<FactorDraws> factors;                             // modeled factors, wave-major
  std::vector<std::vector<std::vector<double>>> baseline_draws;  // [chain][m] simplex
  std::vector<std::string> notes;

  int n_waves() const override { return waves; }
  int n_cells() const override { return cells; }
  int n_chains() const override { return chains; }
  int n_keep() const override { return keep; }
  std::unique_ptr<ObservedDataModel> draw(int chain, int m) const override;
  std::vector<std::string> warnings() const override { return notes; }

  const FactorDraws& get(Factor f, int wave) const;
  void index();  // rebuild lookup after factors change

 private:
  std::vector<int> slot_;
};

class ModelStackDraw : public ObservedDataModel {
 public:
  ModelStackDraw(const BartStack& stack, int chain, int m);
  int n_waves() const override { return stack_.waves; }
  int n_cells() const override { return stack_.cells; }
  double mean_y(int wave, const double* x) const override;
  double sd_y(int wave) const override;
  double prob(Factor f, int wave, const double* x) const override;
  std::span<const double> baseline() const override;

  const bart::ForestDraw& forest(Factor f, int wave) const;

 private:
  const BartStack& stack_;
  int chain_, m_;
  std::vector<const bart::ForestDraw*> forests_;  // indexed wave * kFactorCount + factor
};

BartStack fit_stack(const CohortDataset& data, const StackOptions& opts);
std::vector<double> baseline_counts(const CohortDataset& data);

// Persistence: one file per factor per wave plus manifest.json.
void save_stack(const BartStack& stack, const std::string& dir, uint64_t data_hash, const std::string& config_text);
// Refuses (mismatch error) when the manifest's dataset hash differs from expect_hash.
BartStack load_stack(const std::string& dir, uint64_t expect_hash, std::string* config_text = nullptr);

}  // namespace sace
