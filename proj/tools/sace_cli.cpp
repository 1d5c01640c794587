// Command-line front end; talks to the library through the C API only.
#include <chrono>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sace/sace.h"

namespace {

constexpr int kExitOk = 0, kExitValidation = 1, kExitRuntime = 2;

struct Failure {
  sace_status status;
  std::string message;
};

void check(sace_status s) {
  if (s != SACE_OK) throw Failure{s, sace_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  sace_string_free(s);
  return out;
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};
using Dataset = Handle<sace_dataset, sace_dataset_free>;
using Config = Handle<sace_config, sace_config_free>;
using Dgp = Handle<sace_dgp, sace_dgp_free>;
using Stack = Handle<sace_stack, sace_stack_free>;
using Result = Handle<sace_result, sace_result_free>;

// Options shared by the pipeline subcommands; flags win over the config file.
struct RunFlags {
  std::string data, schema, config, out, stack;
  std::vector<std::string> sets;
  std::string seed, chains, burn, keep, thin, n_pseudo, blocks, chi, gamma_mode, estimand, sensitivity, bootstrap,
      workers;

  void attach(CLI::App* app, bool with_out = true) {
    app->add_option("--data", data, "cohort CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--schema", schema, "schema sidecar (default: <data>.schema)");
    app->add_option("--config", config, "key=value run configuration file")->check(CLI::ExistingFile);
    if (with_out) app->add_option("--out", out, "output directory")->required();
    app->add_option("--set", sets, "override a config key (key=value), repeatable");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--chains", chains, "parallel chains");
    app->add_option("--burn", burn, "burn-in iterations per chain");
    app->add_option("--keep", keep, "kept draws in total (multiple of chains)");
    app->add_option("--thin", thin, "thinning interval");
    app->add_option("--n-pseudo", n_pseudo, "pseudo-individuals per draw");
    app->add_option("--blocks", blocks, "pseudo-sample blocks per draw");
    app->add_option("--chi", chi, "dropout weight variant: first_principles|a3");
    app->add_option("--gamma-mode", gamma_mode, "outcome shift at first|all unobserved waves");
    app->add_option("--estimand", estimand, "sace|survivor_contrast");
    app->add_option("--sensitivity", sensitivity, "prior|fixed|zero");
    app->add_option("--bootstrap", bootstrap, "IPTW bootstrap replicates");
    app->add_option("--workers", workers, "worker threads (default: available parallelism)");
  }

  void load(Config& c) const {
    if (!config.empty())
      check(sace_config_read(config.c_str(), &c.p));
    else
      check(sace_config_new(&c.p));
    auto set = [&](const char* key, const std::string& v) {
      if (!v.empty()) check(sace_config_set(c.p, key, v.c_str()));
    };
    for (const auto& s : sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos) throw Failure{SACE_E_INVALID_ARG, "--set expects key=value, got '" + s + "'"};
      check(sace_config_set(c.p, s.substr(0, eq).c_str(), s.substr(eq + 1).c_str()));
    }
    set("seed", seed);
    set("chains", chains);
    set("burn", burn);
    set("keep", keep);
    set("thin", thin);
    set("n_pseudo", n_pseudo);
    set("blocks", blocks);
    set("chi_variant", chi);
    set("gamma_mode", gamma_mode);
    set("estimand", estimand);
    set("sensitivity", sensitivity);
    set("bootstrap", bootstrap);
    set("workers", workers);
    set("dataset", data);
    set("out", out);
    check(sace_config_validate(c.p));
  }

  void read_data(Dataset& d) const { check(sace_dataset_read(data.c_str(), schema.empty() ? nullptr : schema.c_str(), &d.p)); }
};

int cmd_validate(const std::string& path, const std::string& schema) {
  Dataset d;
  check(sace_dataset_read(path.c_str(), schema.empty() ? nullptr : schema.c_str(), &d.p));
  size_t n = 0;
  char* report = nullptr;
  check(sace_dataset_validate(d.p, &n, &report));
  auto text = take(report);
  if (n == 0) {
    std::cout << "valid\n";
    return kExitOk;
  }
  std::cout << "id,wave,rule\n" << text;
  std::cerr << n << " violation(s)\n";
  return kExitValidation;
}

int cmd_simulate(const std::string& dgp, size_t n, uint64_t seed, const std::string& out, std::string truth,
                 size_t oracle_m) {
  Dgp g;
  if (sace_dgp_preset(dgp.c_str(), &g.p) != SACE_OK) check(sace_dgp_read(dgp.c_str(), &g.p));
  Dataset d;
  char* tj = nullptr;
  check(sace_dgp_simulate(g.p, n, seed, oracle_m, &d.p, &tj));
  auto text = take(tj);
  check(sace_dataset_write(d.p, out.c_str()));
  if (truth.empty()) truth = out + ".truth.json";
  FILE* f = std::fopen(truth.c_str(), "wb");
  if (!f) throw Failure{SACE_E_IO, "cannot write " + truth};
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
  std::cout << "wrote " << out << " and " << truth << "\n";
  return kExitOk;
}

int cmd_fit(const RunFlags& fl) {
  Config c;
  fl.load(c);
  Dataset d;
  fl.read_data(d);
  auto t0 = std::chrono::steady_clock::now();
  Stack s;
  check(sace_fit(d.p, c.p, &s.p));
  check(sace_stack_save(s.p, d.p, c.p, fl.out.c_str()));
  double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "stack written to " << fl.out << " (" << el << " s)\n";
  return kExitOk;
}

int cmd_estimate(const RunFlags& fl) {
  Config c;
  fl.load(c);
  Dataset d;
  fl.read_data(d);
  Stack s;
  if (!fl.stack.empty()) check(sace_stack_load(fl.stack.c_str(), d.p, c.p, &s.p));
  Result r;
  check(sace_estimate(d.p, c.p, s.p, &r.p));
  check(sace_result_write(r.p, d.p, c.p, fl.out.c_str()));
  double mean, sd, lo, hi, el;
  check(sace_result_summary(r.p, &mean, &sd, &lo, &hi));
  check(sace_result_elapsed(r.p, &el));
  std::cout << "tau mean " << mean << " sd " << sd << " 95% [" << lo << ", " << hi << "]\n";
  std::cout << "wall-clock " << el << " s; outputs in " << fl.out << "\n";
  return kExitOk;
}

int cmd_compare(const RunFlags& fl) {
  Config c;
  fl.load(c);
  Dataset d;
  fl.read_data(d);
  char* csv = nullptr;
  check(sace_compare(d.p, c.p, fl.out.c_str(), &csv));
  std::cout << take(csv);
  return kExitOk;
}

int cmd_lpml(const RunFlags& fl) {
  Config c;
  fl.load(c);
  Dataset d;
  fl.read_data(d);
  Stack s;
  if (!fl.stack.empty()) check(sace_stack_load(fl.stack.c_str(), d.p, c.p, &s.p));
  char* js = nullptr;
  check(sace_lpml(d.p, c.p, s.p, fl.out.c_str(), &js));
  std::cout << take(js);
  return kExitOk;
}

int cmd_summary(const std::string& path) {
  char* js = nullptr;
  check(sace_summary_file(path.c_str(), &js));
  std::cout << take(js);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Survivor average causal effect estimation by semi-parametric g-computation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sace_version()));

  std::string vpath, vschema;
  auto* validate = app.add_subcommand("validate", "check a cohort against the data invariants");
  validate->add_option("csv", vpath, "cohort CSV")->required()->check(CLI::ExistingFile);
  validate->add_option("--schema", vschema, "schema sidecar");

  std::string dgp, sim_out, truth;
  size_t n = 500, oracle_m = 200000;
  uint64_t sim_seed = 1;
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic cohort with known truth");
  simulate->add_option("--dgp", dgp, "preset name or dgp config file")->required();
  simulate->add_option("--n", n, "individuals");
  simulate->add_option("--seed", sim_seed, "seed");
  simulate->add_option("--out", sim_out, "cohort CSV to write")->required();
  simulate->add_option("--truth", truth, "truth JSON (default: <out>.truth.json)");
  simulate->add_option("--oracle-m", oracle_m, "Monte Carlo size of the truth oracle");

  RunFlags fit_f, est_f, cmp_f, lpml_f;
  auto* fit = app.add_subcommand("fit", "fit the observed-data model stack");
  fit_f.attach(fit);
  auto* estimate = app.add_subcommand("estimate", "posterior samples of the SACE");
  est_f.attach(estimate);
  estimate->add_option("--stack", est_f.stack, "stack directory from a previous fit")->check(CLI::ExistingDirectory);
  auto* compare = app.add_subcommand("compare", "run every enabled method");
  cmp_f.attach(compare);
  auto* lpml = app.add_subcommand("lpml", "log pseudo marginal likelihood of the model families");
  lpml_f.attach(lpml);
  lpml->add_option("--stack", lpml_f.stack, "stack directory from a previous fit")->check(CLI::ExistingDirectory);

  std::string spath;
  auto* summary = app.add_subcommand("summary", "posterior summary of a tau_samples.csv file");
  summary->add_option("csv", spath, "tau_samples.csv")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitRuntime;
  }

  try {
    if (validate->parsed()) return cmd_validate(vpath, vschema);
    if (simulate->parsed()) return cmd_simulate(dgp, n, sim_seed, sim_out, truth, oracle_m);
    if (fit->parsed()) return cmd_fit(fit_f);
    if (estimate->parsed()) return cmd_estimate(est_f);
    if (compare->parsed()) return cmd_compare(cmp_f);
    if (lpml->parsed()) return cmd_lpml(lpml_f);
    if (summary->parsed()) return cmd_summary(spath);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.status == SACE_E_VALIDATION ? kExitValidation : kExitRuntime;
  }
  return kExitRuntime;
}
