#include "sace/sace.h"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>

#include "sace/error.hpp"
#include "sace/pipeline.hpp"

using namespace sace;

struct sace_dataset {
  CohortDataset data;
};
struct sace_config {
  RunConfig cfg;
};
struct sace_dgp {
  dgp::DgpConfig cfg;
};
struct sace_stack {
  BartStack stack;
};
struct sace_result {
  gcomp::SaceResult res;
  double elapsed = 0;
};

namespace {

thread_local std::string g_error;

sace_status code(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return SACE_E_INVALID_ARG;
    case ErrorKind::Io: return SACE_E_IO;
    case ErrorKind::Parse: return SACE_E_PARSE;
    case ErrorKind::Validation: return SACE_E_VALIDATION;
    case ErrorKind::Mismatch: return SACE_E_MISMATCH;
    default: return SACE_E_RUNTIME;
  }
}

template <class F>
sace_status guard(F&& f) {
  g_error.clear();
  try {
    f();
    return SACE_OK;
  } catch (const Error& e) {
    g_error = e.what();
    return code(e.kind());
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
    return SACE_E_RUNTIME;
  } catch (const std::exception& e) {
    g_error = e.what();
    return SACE_E_RUNTIME;
  }
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorKind::InvalidArgument, std::string(what) + " is null");
}

char* dup(const std::string& s) {
  auto* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

}  // namespace

extern "C" {

const char* sace_last_error(void) { return g_error.c_str(); }
const char* sace_version(void) { return pipeline::kVersion; }
void sace_string_free(char* s) { std::free(s); }

sace_status sace_dataset_read(const char* csv_path, const char* schema_path, sace_dataset** out) {
  return guard([&] {
    need(csv_path, "csv_path");
    need(out, "out");
    auto d = std::make_unique<sace_dataset>();
    d->data = read_cohort(csv_path, schema_path ? schema_path : "");
    *out = d.release();
  });
}

sace_status sace_dataset_write(const sace_dataset* d, const char* csv_path) {
  return guard([&] {
    need(d, "dataset");
    need(csv_path, "csv_path");
    write_cohort(d->data, csv_path);
  });
}

sace_status sace_dataset_validate(const sace_dataset* d, size_t* n_violations, char** report) {
  return guard([&] {
    need(d, "dataset");
    auto rep = validate_cohort(d->data);
    if (n_violations) *n_violations = rep.items.size();
    if (report) *report = dup(rep.to_text());
  });
}

sace_status sace_dataset_info(const sace_dataset* d, size_t* n_people, int* n_waves, int* n_cells) {
  return guard([&] {
    need(d, "dataset");
    if (n_people) *n_people = d->data.size();
    if (n_waves) *n_waves = d->data.n_waves;
    if (n_cells) *n_cells = d->data.n_cells;
  });
}

sace_status sace_dataset_hash(const sace_dataset* d, uint64_t* out) {
  return guard([&] {
    need(d, "dataset");
    need(out, "out");
    *out = dataset_hash(d->data);
  });
}

void sace_dataset_free(sace_dataset* d) { delete d; }

sace_status sace_config_new(sace_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new sace_config();
  });
}

sace_status sace_config_read(const char* path, sace_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    auto c = std::make_unique<sace_config>();
    c->cfg = RunConfig::parse(read_file(path));
    *out = c.release();
  });
}

sace_status sace_config_parse(const char* text, sace_config** out) {
  return guard([&] {
    need(text, "text");
    need(out, "out");
    auto c = std::make_unique<sace_config>();
    c->cfg = RunConfig::parse(text);
    *out = c.release();
  });
}

sace_status sace_config_set(sace_config* c, const char* key, const char* value) {
  return guard([&] {
    need(c, "config");
    need(key, "key");
    need(value, "value");
    c->cfg.set(key, value);
  });
}

sace_status sace_config_get(const sace_config* c, const char* key, char** value) {
  return guard([&] {
    need(c, "config");
    need(key, "key");
    need(value, "value");
    *value = dup(c->cfg.get(key));
  });
}

sace_status sace_config_text(const sace_config* c, char** text) {
  return guard([&] {
    need(c, "config");
    need(text, "text");
    *text = dup(c->cfg.to_text());
  });
}

sace_status sace_config_validate(const sace_config* c) {
  return guard([&] {
    need(c, "config");
    c->cfg.validate();
  });
}

void sace_config_free(sace_config* c) { delete c; }

sace_status sace_dgp_preset(const char* name, sace_dgp** out) {
  return guard([&] {
    need(name, "name");
    need(out, "out");
    auto g = std::make_unique<sace_dgp>();
    g->cfg = dgp::preset(name);
    *out = g.release();
  });
}

sace_status sace_dgp_read(const char* path, sace_dgp** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    auto g = std::make_unique<sace_dgp>();
    g->cfg = dgp::DgpConfig::parse(read_file(path));
    *out = g.release();
  });
}

sace_status sace_dgp_text(const sace_dgp* g, char** text) {
  return guard([&] {
    need(g, "dgp");
    need(text, "text");
    *text = dup(g->cfg.to_text());
  });
}

namespace {
dgp::OracleValue truth_of(const dgp::DgpConfig& cfg, size_t m, uint64_t seed) {
  if (cfg.mode == dgp::Mode::Discrete) return dgp::oracle_sace_exact(cfg);
  return dgp::oracle_sace(cfg, m, seed);
}
}  // namespace

sace_status sace_dgp_simulate(const sace_dgp* g, size_t n, uint64_t seed, size_t oracle_m, sace_dataset** data,
                              char** truth_json) {
  return guard([&] {
    need(g, "dgp");
    need(data, "data");
    auto sim = dgp::generate_cohort(g->cfg, n, seed);
    if (truth_json) *truth_json = dup(dgp::truth_json(g->cfg, sim, truth_of(g->cfg, oracle_m, seed)));
    auto d = std::make_unique<sace_dataset>();
    d->data = std::move(sim.data);
    *data = d.release();
  });
}

sace_status sace_dgp_truth(const sace_dgp* g, size_t oracle_m, uint64_t seed, double* tau, double* se) {
  return guard([&] {
    need(g, "dgp");
    auto o = truth_of(g->cfg, oracle_m, seed);
    if (tau) *tau = o.tau;
    if (se) *se = o.se;
  });
}

void sace_dgp_free(sace_dgp* g) { delete g; }

sace_status sace_fit(const sace_dataset* d, const sace_config* c, sace_stack** out) {
  return guard([&] {
    need(d, "dataset");
    need(c, "config");
    need(out, "out");
    auto s = std::make_unique<sace_stack>();
    s->stack = pipeline::run_fit(d->data, c->cfg);
    *out = s.release();
  });
}

sace_status sace_stack_save(const sace_stack* s, const sace_dataset* d, const sace_config* c, const char* dir) {
  return guard([&] {
    need(s, "stack");
    need(d, "dataset");
    need(c, "config");
    need(dir, "dir");
    pipeline::save_fit(s->stack, d->data, c->cfg, dir);
  });
}

sace_status sace_stack_load(const char* dir, const sace_dataset* d, const sace_config* c, sace_stack** out) {
  return guard([&] {
    need(dir, "dir");
    need(d, "dataset");
    need(c, "config");
    need(out, "out");
    auto s = std::make_unique<sace_stack>();
    s->stack = pipeline::load_fit(dir, d->data, c->cfg);
    *out = s.release();
  });
}

void sace_stack_free(sace_stack* s) { delete s; }

sace_status sace_estimate(const sace_dataset* d, const sace_config* c, const sace_stack* s, sace_result** out) {
  return guard([&] {
    need(d, "dataset");
    need(c, "config");
    need(out, "out");
    auto t0 = std::chrono::steady_clock::now();
    auto r = std::make_unique<sace_result>();
    r->res = pipeline::run_estimate(d->data, c->cfg, s ? &s->stack : nullptr);
    r->elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    *out = r.release();
  });
}

sace_status sace_result_write(const sace_result* r, const sace_dataset* d, const sace_config* c, const char* dir) {
  return guard([&] {
    need(r, "result");
    need(d, "dataset");
    need(c, "config");
    need(dir, "dir");
    pipeline::write_estimate(r->res, d->data, c->cfg, dir, r->elapsed);
  });
}

sace_status sace_result_count(const sace_result* r, size_t* n) {
  return guard([&] {
    need(r, "result");
    need(n, "n");
    *n = r->res.draws.size();
  });
}

sace_status sace_result_taus(const sace_result* r, double* out, size_t n) {
  return guard([&] {
    need(r, "result");
    need(out, "out");
    if (n < r->res.draws.size()) fail(ErrorKind::InvalidArgument, "output buffer too small");
    for (size_t i = 0; i < r->res.draws.size(); ++i) out[i] = r->res.draws[i].tau;
  });
}

sace_status sace_result_summary(const sace_result* r, double* mean, double* sd, double* lo, double* hi) {
  return guard([&] {
    need(r, "result");
    auto s = diagnostics::summarize(r->res.taus());
    if (mean) *mean = s.mean;
    if (sd) *sd = s.sd;
    if (lo) *lo = s.q025;
    if (hi) *hi = s.q975;
  });
}

sace_status sace_result_elapsed(const sace_result* r, double* seconds) {
  return guard([&] {
    need(r, "result");
    need(seconds, "seconds");
    *seconds = r->elapsed;
  });
}

void sace_result_free(sace_result* r) { delete r; }

sace_status sace_compare(const sace_dataset* d, const sace_config* c, const char* out_dir, char** csv) {
  return guard([&] {
    need(d, "dataset");
    need(c, "config");
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> notes;
    auto rows = pipeline::run_compare(d->data, c->cfg, &notes);
    auto text = pipeline::compare_csv(rows);
    if (out_dir) {
      ensure_dir(out_dir);
      write_file(std::string(out_dir) + "/compare.csv", text);
      double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_file(std::string(out_dir) + "/manifest.json", pipeline::manifest_json("compare", &d->data, c->cfg, {}, el, notes));
    }
    if (csv) *csv = dup(text);
  });
}

sace_status sace_lpml(const sace_dataset* d, const sace_config* c, const sace_stack* s, const char* out_dir, char** json) {
  return guard([&] {
    need(d, "dataset");
    need(c, "config");
    auto t0 = std::chrono::steady_clock::now();
    auto r = pipeline::run_lpml(d->data, c->cfg, s ? &s->stack : nullptr);
    auto text = pipeline::lpml_json(r);
    if (out_dir) {
      ensure_dir(out_dir);
      write_file(std::string(out_dir) + "/lpml.json", text);
      write_file(std::string(out_dir) + "/cpo.csv", pipeline::lpml_csv(r, d->data));
      double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_file(std::string(out_dir) + "/manifest.json", pipeline::manifest_json("lpml", &d->data, c->cfg, {}, el));
    }
    if (json) *json = dup(text);
  });
}

sace_status sace_summary_file(const char* tau_csv, char** json) {
  return guard([&] {
    need(tau_csv, "tau_csv");
    need(json, "json");
    *json = dup(pipeline::summarize_tau_file(tau_csv));
  });
}

}  // extern "C"
