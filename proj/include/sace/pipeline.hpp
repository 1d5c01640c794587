#pragma once
#include <string>
#include <vector>

#include "sace/config.hpp"
#include "sace/dgp.hpp"
#include "sace/diagnostics.hpp"
#include "sace/gcomp.hpp"

namespace sace::pipeline {

constexpr const char* kVersion = "1.0.0";

BartStack run_fit(const CohortDataset& data, const RunConfig& cfg);
void save_fit(const BartStack& stack, const CohortDataset& data, const RunConfig& cfg, const std::string& dir);
// refuses stacks fitted on other data or with other fit settings
BartStack load_fit(const std::string& dir, const CohortDataset& data, const RunConfig& cfg);

// fits when stack is null
gcomp::SaceResult run_estimate(const CohortDataset& data, const RunConfig& cfg, const BartStack* stack = nullptr);

// tau_samples.csv, per_wave.csv, sensitivity_draws.csv, summary.json, manifest.json
void write_estimate(const gcomp::SaceResult& res, const CohortDataset& data, const RunConfig& cfg,
                    const std::string& dir, double elapsed_seconds);
std::string summary_json(const gcomp::SaceResult& res);

struct CompareRow {
  std::string method;
  double estimate = 0, lo = 0, hi = 0;
  bool has_ci = true;
};
std::vector<CompareRow> run_compare(const CohortDataset& data, const RunConfig& cfg, std::vector<std::string>* notes = nullptr);
std::string compare_csv(const std::vector<CompareRow>& rows);

struct LpmlRun {
  diagnostics::LpmlReport bsp, bp;
  bool has_bsp = false, has_bp = false;
};
LpmlRun run_lpml(const CohortDataset& data, const RunConfig& cfg, const BartStack* stack = nullptr);
std::string lpml_json(const LpmlRun& r);
std::string lpml_csv(const LpmlRun& r, const CohortDataset& data);

// summary of the tau column of a tau_samples.csv file
std::string summarize_tau_file(const std::string& path);

std::string manifest_json(const std::string& stage, const CohortDataset* data, const RunConfig& cfg,
                          const std::vector<uint64_t>& chain_seeds, double elapsed_seconds,
                          const std::vector<std::string>& notes = {});

}  // namespace sace::pipeline
