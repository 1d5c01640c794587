#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sace/sace.h"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  sace_string_free(s);
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kQuick =
    "chains=2\nkeep=4\nburn=20\nn_pseudo=400\nblocks=2\nbootstrap=10\n"
    "bart.Y.trees=10\nbart.Z.trees=10\nbart.W.trees=10\nbart.R.trees=10\nbart.S.trees=10\n";

sace_dataset* simulated(const char* preset, size_t n, uint64_t seed) {
  sace_dgp* g = nullptr;
  REQUIRE(sace_dgp_preset(preset, &g) == SACE_OK);
  sace_dataset* d = nullptr;
  char* truth = nullptr;
  REQUIRE(sace_dgp_simulate(g, n, seed, 1000, &d, &truth) == SACE_OK);
  CHECK(take(truth).find("tau_true") != std::string::npos);
  sace_dgp_free(g);
  return d;
}

}  // namespace

TEST_CASE("errors are reported through status codes") {
  sace_dataset* d = nullptr;
  CHECK(sace_dataset_read("/nonexistent/x.csv", nullptr, &d) == SACE_E_IO);
  CHECK(d == nullptr);
  CHECK(std::string(sace_last_error()).size() > 0);
  CHECK(sace_dataset_read(nullptr, nullptr, &d) == SACE_E_INVALID_ARG);
  sace_config* c = nullptr;
  CHECK(sace_config_parse("chains=x\n", &c) == SACE_E_PARSE);
  REQUIRE(sace_config_new(&c) == SACE_OK);
  CHECK(std::string(sace_last_error()).empty());
  CHECK(sace_config_set(c, "nope", "1") == SACE_E_PARSE);
  CHECK(sace_config_set(c, "keep", "7") == SACE_OK);
  CHECK(sace_config_validate(c) == SACE_E_VALIDATION);
  sace_config_free(c);
  sace_dgp* g = nullptr;
  CHECK(sace_dgp_preset("nope", &g) == SACE_E_INVALID_ARG);
  CHECK(std::string(sace_version()).size() > 0);
  // freeing null handles is a no-op
  sace_dataset_free(nullptr);
  sace_config_free(nullptr);
  sace_stack_free(nullptr);
  sace_result_free(nullptr);
  sace_dgp_free(nullptr);
  sace_string_free(nullptr);
}

TEST_CASE("dataset round trip and validation") {
  auto dir = testing::temp_dir("capi_data");
  fs::create_directories(dir);
  sace_dataset* d = simulated("toy", 150, 3);
  size_t n = 0;
  int waves = 0, cells = 0;
  REQUIRE(sace_dataset_info(d, &n, &waves, &cells) == SACE_OK);
  CHECK(n == 150);
  CHECK(waves == 3);
  size_t bad = 1;
  char* report = nullptr;
  REQUIRE(sace_dataset_validate(d, &bad, &report) == SACE_OK);
  CHECK(bad == 0);
  take(report);
  auto path = dir + "/toy.csv";
  REQUIRE(sace_dataset_write(d, path.c_str()) == SACE_OK);
  sace_dataset* back = nullptr;
  REQUIRE(sace_dataset_read(path.c_str(), nullptr, &back) == SACE_OK);
  uint64_t h1 = 0, h2 = 0;
  sace_dataset_hash(d, &h1);
  sace_dataset_hash(back, &h2);
  CHECK(h1 == h2);
  sace_dataset_free(back);

  // a participation record after death is a violation, not a read error
  auto text = slurp(path);
  std::ofstream(dir + "/bad.csv") << text;
  fs::copy_file(path + ".schema", dir + "/bad.csv.schema", fs::copy_options::overwrite_existing);
  std::string csv = slurp(dir + "/bad.csv");
  auto pos = csv.find("\np1,1,");
  REQUIRE(pos != std::string::npos);
  auto end = csv.find('\n', pos + 1);
  csv.replace(pos + 1, end - pos - 1, "p1,1,,,,0,0,1");
  auto pos2 = csv.find("\np1,2,");
  auto end2 = csv.find('\n', pos2 + 1);
  csv.replace(pos2 + 1, end2 - pos2 - 1, "p1,2,0.5,0,0,1,1,1");
  std::ofstream(dir + "/bad.csv", std::ios::trunc) << csv;
  sace_dataset* bd = nullptr;
  REQUIRE(sace_dataset_read((dir + "/bad.csv").c_str(), nullptr, &bd) == SACE_OK);
  REQUIRE(sace_dataset_validate(bd, &bad, &report) == SACE_OK);
  CHECK(bad > 0);
  CHECK(take(report).find("p1,2,") != std::string::npos);
  sace_dataset_free(bd);
  sace_dataset_free(d);
}

TEST_CASE("config handles") {
  sace_config* c = nullptr;
  REQUIRE(sace_config_parse(kQuick, &c) == SACE_OK);
  char* v = nullptr;
  REQUIRE(sace_config_get(c, "chains", &v) == SACE_OK);
  CHECK(take(v) == "2");
  char* text = nullptr;
  REQUIRE(sace_config_text(c, &text) == SACE_OK);
  sace_config* c2 = nullptr;
  REQUIRE(sace_config_parse(text, &c2) == SACE_OK);
  char* text2 = nullptr;
  sace_config_text(c2, &text2);
  CHECK(take(text) == take(text2));
  sace_config_free(c);
  sace_config_free(c2);
}

TEST_CASE("fit, save, load and estimate") {
  auto dir = testing::temp_dir("capi_fit");
  fs::remove_all(dir);
  sace_dataset* d = simulated("toy", 200, 5);
  sace_config* c = nullptr;
  REQUIRE(sace_config_parse(kQuick, &c) == SACE_OK);

  sace_result* direct = nullptr;
  REQUIRE(sace_estimate(d, c, nullptr, &direct) == SACE_OK);
  size_t n = 0;
  sace_result_count(direct, &n);
  CHECK(n == 4);
  std::vector<double> t1(n), t2(n);
  sace_result_taus(direct, t1.data(), n);

  sace_stack* s = nullptr;
  REQUIRE(sace_fit(d, c, &s) == SACE_OK);
  REQUIRE(sace_stack_save(s, d, c, (dir + "/stack").c_str()) == SACE_OK);
  sace_stack_free(s);
  sace_stack* loaded = nullptr;
  REQUIRE(sace_stack_load((dir + "/stack").c_str(), d, c, &loaded) == SACE_OK);
  sace_result* via = nullptr;
  REQUIRE(sace_estimate(d, c, loaded, &via) == SACE_OK);
  sace_result_taus(via, t2.data(), n);
  CHECK(t1 == t2);

  double mean, sd, lo, hi, el;
  REQUIRE(sace_result_summary(via, &mean, &sd, &lo, &hi) == SACE_OK);
  CHECK(lo <= mean);
  CHECK(mean <= hi);
  sace_result_elapsed(via, &el);
  CHECK(el >= 0);
  REQUIRE(sace_result_write(via, d, c, (dir + "/est").c_str()) == SACE_OK);
  for (const char* f : {"tau_samples.csv", "per_wave.csv", "sensitivity_draws.csv", "summary.json", "manifest.json"})
    CHECK(fs::exists(dir + "/est/" + f));
  char* js = nullptr;
  REQUIRE(sace_summary_file((dir + "/est/tau_samples.csv").c_str(), &js) == SACE_OK);
  CHECK(take(js).find("mean") != std::string::npos);
  std::vector<double> small(2);
  CHECK(sace_result_taus(via, small.data(), 2) == SACE_E_INVALID_ARG);

  // a stack fitted under other settings or data is refused
  sace_config* c2 = nullptr;
  sace_config_parse(kQuick, &c2);
  sace_config_set(c2, "seed", "2");
  sace_stack* refused = nullptr;
  CHECK(sace_stack_load((dir + "/stack").c_str(), d, c2, &refused) == SACE_E_MISMATCH);
  CHECK(refused == nullptr);
  sace_dataset* other = simulated("toy", 200, 6);
  CHECK(sace_stack_load((dir + "/stack").c_str(), other, c, &refused) == SACE_E_MISMATCH);
  // estimation-only keys do not invalidate the stack
  sace_config_set(c2, "seed", "1");
  sace_config_set(c2, "n_pseudo", "300");
  REQUIRE(sace_stack_load((dir + "/stack").c_str(), d, c2, &refused) == SACE_OK);
  sace_stack_free(refused);

  sace_dataset_free(other);
  sace_config_free(c2);
  sace_result_free(direct);
  sace_result_free(via);
  sace_stack_free(loaded);
  sace_config_free(c);
  sace_dataset_free(d);
}

TEST_CASE("compare and lpml") {
  auto dir = testing::temp_dir("capi_cmp");
  fs::remove_all(dir);
  sace_dataset* d = simulated("recovery", 300, 2);
  sace_config* c = nullptr;
  REQUIRE(sace_config_parse(kQuick, &c) == SACE_OK);
  char* csv = nullptr;
  REQUIRE(sace_compare(d, c, dir.c_str(), &csv) == SACE_OK);
  auto table = take(csv);
  for (const char* m : {"method,estimate,lo,hi", "BSP-GC", "BP-GC", "IPTW-W", "IPTW-SW"})
    CHECK(table.find(m) != std::string::npos);
  CHECK(fs::exists(dir + "/compare.csv"));
  char* js = nullptr;
  REQUIRE(sace_lpml(d, c, nullptr, nullptr, &js) == SACE_OK);
  auto lj = take(js);
  CHECK(lj.find("BSP") != std::string::npos);
  sace_config_set(c, "methods.bsp_gc", "0");
  sace_config_set(c, "methods.bp_gc", "0");
  REQUIRE(sace_compare(d, c, nullptr, &csv) == SACE_OK);
  CHECK(take(csv).find("BSP-GC") == std::string::npos);
  sace_config_free(c);
  sace_dataset_free(d);
}
