#include "sace/pipeline.hpp"

#include <sstream>

#include "json.hpp"
#include "sace/baselines.hpp"
#include "sace/error.hpp"

namespace sace::pipeline {

using nlohmann::ordered_json;

namespace {

ordered_json summary_obj(const diagnostics::Summary& s) {
  ordered_json j;
  j["mean"] = s.mean;
  j["sd"] = s.sd;
  j["q2.5"] = s.q025;
  j["q50"] = s.q50;
  j["q97.5"] = s.q975;
  j["n"] = s.n;
  return j;
}

std::vector<std::vector<double>> by_chain(const gcomp::SaceResult& res) {
  int C = 0;
  for (const auto& d : res.draws) C = std::max(C, d.chain + 1);
  std::vector<std::vector<double>> out(static_cast<size_t>(C));
  for (const auto& d : res.draws) out[static_cast<size_t>(d.chain)].push_back(d.tau);
  return out;
}

}  // namespace

BartStack run_fit(const CohortDataset& data, const RunConfig& cfg) {
  cfg.validate();
  require_valid(data);
  return fit_stack(data, cfg.stack_options());
}

void save_fit(const BartStack& stack, const CohortDataset& data, const RunConfig& cfg, const std::string& dir) {
  save_stack(stack, dir, dataset_hash(data), cfg.fit_text());
}

BartStack load_fit(const std::string& dir, const CohortDataset& data, const RunConfig& cfg) {
  std::string text;
  auto st = load_stack(dir, dataset_hash(data), &text);
  if (text != cfg.fit_text())
    fail(ErrorKind::Mismatch, "stack in " + dir + " was fitted with different settings (seed, chains, schedule or bart keys)");
  return st;
}

gcomp::SaceResult run_estimate(const CohortDataset& data, const RunConfig& cfg, const BartStack* stack) {
  cfg.validate();
  require_valid(data);
  BartStack local;
  if (!stack) {
    local = fit_stack(data, cfg.stack_options());
    stack = &local;
  }
  auto res = gcomp::estimate_from_stack(*stack, cfg.sensitivity_source(data), cfg.gcomp_options());
  res.config_text = cfg.to_text();
  return res;
}

std::string summary_json(const gcomp::SaceResult& res) {
  ordered_json j;
  j["method"] = res.method;
  auto taus = res.taus();
  j["tau"] = summary_obj(diagnostics::summarize(taus));
  auto ts = diagnostics::trace_stats(by_chain(res));
  j["trace"] = {{"rhat", std::isfinite(ts.rhat) ? ordered_json(ts.rhat) : ordered_json(nullptr)},
                {"flagged", ts.flagged}};
  auto waves = ordered_json::array();
  for (int k = 1; k < res.n_waves; ++k) {
    std::vector<double> w, c;
    for (const auto& d : res.draws) {
      w.push_back(d.waves[static_cast<size_t>(k)].weight);
      c.push_back(d.waves[static_cast<size_t>(k)].contrast);
    }
    waves.push_back({{"wave", k}, {"weight", summary_obj(diagnostics::summarize(w))},
                     {"contrast", summary_obj(diagnostics::summarize(c))}});
  }
  j["waves"] = waves;
  j["warnings"] = res.warnings;
  return j.dump(2) + "\n";
}

std::string manifest_json(const std::string& stage, const CohortDataset* data, const RunConfig& cfg,
                          const std::vector<uint64_t>& chain_seeds, double elapsed_seconds,
                          const std::vector<std::string>& notes) {
  ordered_json j;
  j["stage"] = stage;
  j["version"] = kVersion;
  j["config_hash"] = hex64(cfg.hash());
  j["config"] = cfg.to_text();
  if (data) {
    j["dataset_hash"] = hex64(dataset_hash(*data));
    j["dataset"] = cfg.dataset;
    j["n_individuals"] = data->size();
    j["n_waves"] = data->n_waves;
  }
  j["master_seed"] = cfg.seed;
  auto seeds = ordered_json::array();
  for (auto s : chain_seeds) seeds.push_back(hex64(s));
  j["chain_seeds"] = seeds;
  j["elapsed_seconds"] = elapsed_seconds;
  j["likelihood_contribution"] =
      "per record: baseline cell; W_0, Y_0; per wave k while retained at k-1: S_k, then R_k if alive, then Z_k, W_k, Y_k "
      "if observed";
  j["iptw_censoring_covariates"] = "same conditioning set as the retention factor R_k";
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

void write_estimate(const gcomp::SaceResult& res, const CohortDataset& data, const RunConfig& cfg,
                    const std::string& dir, double elapsed_seconds) {
  ensure_dir(dir);
  std::ostringstream tau, pw, sd;
  tau << "chain,draw,tau\n";
  pw << "chain,draw,wave,regime,p_hat,mu_hat,weight,contrast\n";
  sd << "chain,draw,wave,xi,gamma,delta,nu\n";
  for (const auto& d : res.draws) {
    tau << d.chain << "," << d.draw << "," << fmt_double(d.tau) << "\n";
    for (int k = 1; k < res.n_waves; ++k) {
      const auto& w = d.waves[static_cast<size_t>(k)];
      pw << d.chain << "," << d.draw << "," << k << ",exposed," << fmt_double(w.p_z) << "," << fmt_double(w.mu_z) << ","
         << fmt_double(w.weight) << "," << fmt_double(w.contrast) << "\n";
      pw << d.chain << "," << d.draw << "," << k << ",never," << fmt_double(w.p_ref) << "," << fmt_double(w.mu_ref)
         << "," << fmt_double(w.weight) << "," << fmt_double(w.contrast) << "\n";
      auto kk = static_cast<size_t>(k);
      sd << d.chain << "," << d.draw << "," << k << "," << fmt_double(d.sens.xi[kk]) << "," << fmt_double(d.sens.gamma[kk])
         << "," << fmt_double(d.sens.delta[kk]) << "," << fmt_double(d.sens.nu[kk]) << "\n";
    }
  }
  write_file(dir + "/tau_samples.csv", tau.str());
  write_file(dir + "/per_wave.csv", pw.str());
  write_file(dir + "/sensitivity_draws.csv", sd.str());
  write_file(dir + "/summary.json", summary_json(res));
  write_file(dir + "/manifest.json", manifest_json("estimate", &data, cfg, res.chain_seeds, elapsed_seconds, res.warnings));
}

std::vector<CompareRow> run_compare(const CohortDataset& data, const RunConfig& cfg, std::vector<std::string>* notes) {
  cfg.validate();
  require_valid(data);
  std::vector<CompareRow> rows;
  auto add_bayes = [&](const gcomp::SaceResult& r) {
    auto s = diagnostics::summarize(r.taus());
    rows.push_back({r.method, s.mean, s.q025, s.q975, true});
    if (notes)
      for (const auto& w : r.warnings) notes->push_back(r.method + ": " + w);
  };
  if (cfg.run_bsp) add_bayes(run_estimate(data, cfg));
  if (cfg.run_bpgc)
    add_bayes(baselines::bpgc_estimate(data, cfg.glm_options(), cfg.sensitivity_source(data), cfg.gcomp_options()));
  for (bool stab : {false, true}) {
    if (stab ? !cfg.run_iptw_sw : !cfg.run_iptw_w) continue;
    auto r = baselines::iptw_estimate(data, stab, cfg.bootstrap, cfg.seed, cfg.workers);
    rows.push_back({r.method, r.estimate, r.lo, r.hi, r.has_ci});
    if (notes)
      for (const auto& w : r.warnings) notes->push_back(r.method + ": " + w);
  }
  if (rows.empty()) fail(ErrorKind::InvalidArgument, "no methods enabled");
  return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream o;
  o << "method,estimate,lo,hi\n";
  for (const auto& r : rows) {
    o << r.method << "," << fmt_double(r.estimate) << ",";
    if (r.has_ci)
      o << fmt_double(r.lo) << "," << fmt_double(r.hi);
    else
      o << ",";
    o << "\n";
  }
  return o.str();
}

LpmlRun run_lpml(const CohortDataset& data, const RunConfig& cfg, const BartStack* stack) {
  cfg.validate();
  require_valid(data);
  LpmlRun out;
  if (cfg.run_bsp) {
    BartStack local;
    if (!stack) {
      local = fit_stack(data, cfg.stack_options());
      stack = &local;
    }
    out.bsp = diagnostics::lpml(*stack, data, cfg.workers);
    out.has_bsp = true;
  }
  if (cfg.run_bpgc) {
    auto g = baselines::fit_glm_stack(data, cfg.glm_options());
    out.bp = diagnostics::lpml(g, data, cfg.workers);
    out.has_bp = true;
  }
  if (!out.has_bsp && !out.has_bp) fail(ErrorKind::InvalidArgument, "no methods enabled");
  return out;
}

std::string lpml_json(const LpmlRun& r) {
  ordered_json j;
  auto one = [](const diagnostics::LpmlReport& rep) {
    ordered_json o;
    o["lpml"] = rep.total;
    o["n_draws"] = rep.n_draws;
    ordered_json f;
    f["x0"] = rep.baseline;
    for (int k = 0; k < kFactorCount; ++k) f[factor_name(static_cast<Factor>(k))] = rep.by_factor[static_cast<size_t>(k)];
    o["by_factor"] = f;
    return o;
  };
  if (r.has_bsp) j["BSP-GC"] = one(r.bsp);
  if (r.has_bp) j["BP-GC"] = one(r.bp);
  return j.dump(2) + "\n";
}

std::string lpml_csv(const LpmlRun& r, const CohortDataset& data) {
  std::ostringstream o;
  o << "id";
  if (r.has_bsp) o << ",log_cpo_bsp";
  if (r.has_bp) o << ",log_cpo_bp";
  o << "\n";
  for (size_t i = 0; i < data.size(); ++i) {
    o << data.people[i].id;
    if (r.has_bsp) o << "," << fmt_double(r.bsp.log_cpo[i]);
    if (r.has_bp) o << "," << fmt_double(r.bp.log_cpo[i]);
    o << "\n";
  }
  return o.str();
}

std::string summarize_tau_file(const std::string& path) {
  auto text = read_file(path);
  auto lines = split(text, '\n');
  if (lines.empty()) fail(ErrorKind::Parse, path + ": empty file");
  auto header = split(trim(lines[0]), ',');
  int col = -1, chain_col = -1;
  for (size_t c = 0; c < header.size(); ++c) {
    if (trim(header[c]) == "tau") col = static_cast<int>(c);
    if (trim(header[c]) == "chain") chain_col = static_cast<int>(c);
  }
  if (col < 0) fail(ErrorKind::Parse, path + ": no tau column");
  std::vector<double> v;
  std::vector<std::vector<double>> chains;
  for (size_t i = 1; i < lines.size(); ++i) {
    auto line = trim(lines[i]);
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (static_cast<int>(f.size()) <= col) fail(ErrorKind::Parse, path + ": short row " + std::to_string(i + 1));
    double x = parse_double(f[static_cast<size_t>(col)], "tau");
    v.push_back(x);
    if (chain_col >= 0) {
      auto c = static_cast<size_t>(parse_int(f[static_cast<size_t>(chain_col)], "chain"));
      if (chains.size() <= c) chains.resize(c + 1);
      chains[c].push_back(x);
    }
  }
  ordered_json j = summary_obj(diagnostics::summarize(v));
  if (!chains.empty()) {
    auto ts = diagnostics::trace_stats(chains);
    j["rhat"] = std::isfinite(ts.rhat) ? ordered_json(ts.rhat) : ordered_json(nullptr);
    j["flagged"] = ts.flagged;
  }
  return j.dump(2) + "\n";
}

}  // namespace sace::pipeline
