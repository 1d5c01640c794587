#pragma once
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sace/util.hpp"

namespace sace {

enum class Factor { Y = 0, Z, W, R, S };
constexpr int kFactorCount = 5;
const char* factor_name(Factor f);
Factor parse_factor(std::string_view s);

// r and s are kept as read (possibly non-binary) so validation can report them.
struct WaveRecord {
  std::optional<double> y;
  std::optional<int> z, w;
  int r = 1, s = 1;
};

struct Individual {
  std::string id;
  int x0 = 0;
  std::vector<WaveRecord> waves;
};

struct Violation {
  std::string id;
  int wave = -1;  // -1: not wave specific
  std::string rule;
};

struct CohortDataset {
  int n_waves = 0;  // J + 1
  int n_cells = 1;  // L
  std::vector<std::string> cell_labels;
  std::vector<Individual> people;
  // structural problems found while reading (missing rows, duplicate rows, ...)
  std::vector<Violation> ingest;

  int last_wave() const { return n_waves - 1; }
  size_t size() const { return people.size(); }
};

struct ValidationReport {
  std::vector<Violation> items;
  bool ok() const { return items.empty(); }
  std::string to_text() const;  // id,wave,rule lines
};

ValidationReport validate_cohort(const CohortDataset& data);
// throws a validation error carrying the first few violations
void require_valid(const CohortDataset& data);

CohortDataset parse_cohort_csv(std::string_view text, std::string_view schema_text = {});
std::string format_cohort_csv(const CohortDataset& data);
std::string format_schema(const CohortDataset& data);
CohortDataset read_cohort(const std::string& csv_path, const std::string& schema_path = "");
// writes csv_path and csv_path + ".schema"
void write_cohort(const CohortDataset& data, const std::string& csv_path);
uint64_t dataset_hash(const CohortDataset& data);

enum class OutcomeStatus { Observed, Missing, MissingStar, TruncatedByDeath };
const char* status_code(OutcomeStatus s);
std::vector<OutcomeStatus> classify_pattern(std::span<const int> r, std::span<const int> s);
// every admissible (r, s) pair for the given number of waves
std::vector<std::pair<std::vector<int>, std::vector<int>>> admissible_patterns(int n_waves);

// Conditioning set of one factor of the observed-data factorization:
// y_0..y_{n_y-1}, z_0..z_{n_z-1}, w_0..w_{n_w-1}, then x0 one-hot.
struct FeatureLayout {
  Factor factor = Factor::Y;
  int wave = 0;
  int n_cells = 1;
  int n_y = 0, n_z = 0, n_w = 0;

  int size() const { return n_y + n_z + n_w + n_cells; }
  std::vector<std::string> names() const;
};

bool is_modeled(Factor f, int wave);
FeatureLayout layout_for(Factor f, int wave, int n_cells);

struct HistoryView {
  std::span<const double> y;
  std::span<const int> z;
  std::span<const int> w;
  int x0 = 0;
};

// checks arity against the layout
void encode(const FeatureLayout& layout, const HistoryView& h, double* out);

struct ModelSubset {
  FeatureLayout layout;
  Matrix X;
  std::vector<double> response;
  std::vector<size_t> individuals;
  size_t n() const { return response.size(); }
};

ModelSubset model_subset(const CohortDataset& data, Factor f, int wave);

}  // namespace sace
