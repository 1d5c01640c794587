#include "sace/config.hpp"

#include <functional>
#include <sstream>

#include "sace/error.hpp"
#include "sace/parallel.hpp"

namespace sace {

const char* to_string(SensitivityMode m) {
  switch (m) {
    case SensitivityMode::Prior: return "prior";
    case SensitivityMode::Fixed: return "fixed";
    default: return "zero";
  }
}

SensitivityMode parse_sensitivity_mode(std::string_view s) {
  if (s == "prior") return SensitivityMode::Prior;
  if (s == "fixed") return SensitivityMode::Fixed;
  if (s == "zero") return SensitivityMode::Zero;
  fail(ErrorKind::Parse, "unknown sensitivity mode '" + std::string(s) + "' (prior|fixed|zero)");
}

namespace {

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
  bool fit = false;
};

int to_int(std::string_view v, const std::string& k) { return static_cast<int>(parse_int(v, k)); }

bool to_bool(std::string_view v, const std::string& k) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  fail(ErrorKind::Parse, "key '" + k + "' expects a boolean, got '" + std::string(v) + "'");
}

std::vector<double> to_list(std::string_view v, const std::string& k) {
  if (trim(v).empty()) return {};
  return parse_double_list(v, k);
}

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    auto add_int = [&](const std::string& n, int RunConfig::*f, bool fit) {
      k.push_back({n, [f](const RunConfig& c) { return std::to_string(c.*f); },
                   [f, n](RunConfig& c, std::string_view v) { c.*f = to_int(v, n); }, fit});
    };
    auto add_bool = [&](const std::string& n, bool RunConfig::*f) {
      k.push_back({n, [f](const RunConfig& c) { return std::string(c.*f ? "1" : "0"); },
                   [f, n](RunConfig& c, std::string_view v) { c.*f = to_bool(v, n); }, false});
    };
    auto add_list = [&](const std::string& n, std::vector<double> RunConfig::*f) {
      k.push_back({n, [f](const RunConfig& c) { return join_doubles(c.*f); },
                   [f, n](RunConfig& c, std::string_view v) { c.*f = to_list(v, n); }, false});
    };
    k.push_back({"dataset", [](const RunConfig& c) { return c.dataset; },
                 [](RunConfig& c, std::string_view v) { c.dataset = std::string(v); }, false});
    k.push_back({"out", [](const RunConfig& c) { return c.out; },
                 [](RunConfig& c, std::string_view v) { c.out = std::string(v); }, false});
    k.push_back({"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, std::string_view v) {
                   auto x = parse_int(v, "seed");
                   if (x < 0) fail(ErrorKind::Validation, "seed must be >= 0");
                   c.seed = static_cast<uint64_t>(x);
                 },
                 true});
    add_int("chains", &RunConfig::chains, true);
    add_int("burn", &RunConfig::burn, true);
    add_int("keep", &RunConfig::keep, true);
    add_int("thin", &RunConfig::thin, true);
    k.push_back({"n_pseudo", [](const RunConfig& c) { return std::to_string(c.n_pseudo); },
                 [](RunConfig& c, std::string_view v) { c.n_pseudo = parse_int(v, "n_pseudo"); }, false});
    add_int("blocks", &RunConfig::blocks, false);
    k.push_back({"chi_variant", [](const RunConfig& c) { return std::string(gcomp::to_string(c.chi)); },
                 [](RunConfig& c, std::string_view v) { c.chi = gcomp::parse_chi_variant(v); }, false});
    k.push_back({"gamma_mode", [](const RunConfig& c) { return std::string(gcomp::to_string(c.gamma)); },
                 [](RunConfig& c, std::string_view v) { c.gamma = gcomp::parse_gamma_mode(v); }, false});
    k.push_back({"estimand", [](const RunConfig& c) { return std::string(gcomp::to_string(c.estimand)); },
                 [](RunConfig& c, std::string_view v) { c.estimand = gcomp::parse_estimand(v); }, false});
    k.push_back({"sensitivity", [](const RunConfig& c) { return std::string(to_string(c.sensitivity)); },
                 [](RunConfig& c, std::string_view v) { c.sensitivity = parse_sensitivity_mode(v); }, false});
    add_list("bounds.xi", &RunConfig::bound_xi);
    add_list("bounds.gamma", &RunConfig::bound_gamma);
    add_list("bounds.delta", &RunConfig::bound_delta);
    add_list("bounds.nu", &RunConfig::bound_nu);
    add_list("fixed.xi", &RunConfig::fixed_xi);
    add_list("fixed.gamma", &RunConfig::fixed_gamma);
    add_list("fixed.delta", &RunConfig::fixed_delta);
    add_list("fixed.nu", &RunConfig::fixed_nu);
    for (int f = 0; f < kFactorCount; ++f) {
      std::string p = std::string("bart.") + factor_name(static_cast<Factor>(f)) + ".";
      auto fi = static_cast<size_t>(f);
      k.push_back({p + "trees", [fi](const RunConfig& c) { return std::to_string(c.bart[fi].n_trees); },
                   [fi, p](RunConfig& c, std::string_view v) { c.bart[fi].n_trees = to_int(v, p + "trees"); }, true});
      for (auto [name, member] : {std::pair{"alpha", &bart::BartConfig::alpha}, {"beta", &bart::BartConfig::beta},
                                  {"k", &bart::BartConfig::k}, {"nu", &bart::BartConfig::nu}, {"q", &bart::BartConfig::q}}) {
        std::string n = p + name;
        k.push_back({n, [fi, member](const RunConfig& c) { return fmt_double(c.bart[fi].*member); },
                     [fi, member, n](RunConfig& c, std::string_view v) { c.bart[fi].*member = parse_double(v, n); }, true});
      }
    }
    k.push_back({"glm.prior_sd", [](const RunConfig& c) { return fmt_double(c.glm_prior_sd); },
                 [](RunConfig& c, std::string_view v) { c.glm_prior_sd = parse_double(v, "glm.prior_sd"); }, false});
    add_bool("methods.bsp_gc", &RunConfig::run_bsp);
    add_bool("methods.bp_gc", &RunConfig::run_bpgc);
    add_bool("methods.iptw_w", &RunConfig::run_iptw_w);
    add_bool("methods.iptw_sw", &RunConfig::run_iptw_sw);
    add_int("bootstrap", &RunConfig::bootstrap, false);
    add_int("workers", &RunConfig::workers, false);
    return k;
  }();
  return keys;
}

const Key& find_key(std::string_view name) {
  for (const auto& k : registry())
    if (k.name == name) return k;
  fail(ErrorKind::Parse, "unknown config key '" + std::string(name) + "'");
}

// accepts per-wave values for waves 1..J, or J+1 values with a leading 0
std::vector<double> per_wave(const std::vector<double>& v, int n_waves, const std::string& what) {
  auto J = static_cast<size_t>(n_waves - 1);
  if (v.size() == J) {
    std::vector<double> out{0.0};
    out.insert(out.end(), v.begin(), v.end());
    return out;
  }
  if (v.size() == J + 1) {
    auto out = v;
    out[0] = 0.0;
    return out;
  }
  fail(ErrorKind::Validation, what + " needs " + std::to_string(J) + " values (waves 1.." + std::to_string(J) + ")");
}

}  // namespace

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& k : registry()) out.push_back(k.name);
  return out;
}

void RunConfig::set(std::string_view key, std::string_view value) { find_key(trim(key)).set(*this, trim(value)); }

std::string RunConfig::get(std::string_view key) const { return find_key(trim(key)).get(*this); }

std::string RunConfig::to_text() const {
  std::ostringstream o;
  for (const auto& k : registry()) o << k.name << "=" << k.get(*this) << "\n";
  return o.str();
}

std::string RunConfig::fit_text() const {
  std::ostringstream o;
  for (const auto& k : registry())
    if (k.fit) o << k.name << "=" << k.get(*this) << "\n";
  return o.str();
}

RunConfig RunConfig::parse(std::string_view text, const RunConfig& base) {
  RunConfig c = base;
  int lineno = 0;
  for (auto raw : split(text, '\n')) {
    ++lineno;
    auto line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorKind::Parse, "config line " + std::to_string(lineno) + ": expected key=value");
    c.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return c;
}

RunConfig RunConfig::parse(std::string_view text) { return parse(text, RunConfig{}); }

uint64_t RunConfig::hash() const { return fnv1a(to_text()); }

int RunConfig::keep_per_chain() const { return keep / chains; }

void RunConfig::validate() const {
  auto pos = [](long long v, const char* what) {
    if (v < 1) fail(ErrorKind::Validation, std::string(what) + " must be >= 1");
  };
  pos(chains, "chains");
  pos(keep, "keep");
  pos(thin, "thin");
  pos(n_pseudo, "n_pseudo");
  pos(blocks, "blocks");
  if (burn < 0) fail(ErrorKind::Validation, "burn must be >= 0");
  if (bootstrap < 0) fail(ErrorKind::Validation, "bootstrap must be >= 0");
  if (workers < 0) fail(ErrorKind::Validation, "workers must be >= 0");
  if (keep % chains != 0)
    fail(ErrorKind::Validation, "keep (" + std::to_string(keep) + ") must be a multiple of chains (" +
                                    std::to_string(chains) + ")");
  if (blocks > n_pseudo) fail(ErrorKind::Validation, "blocks must not exceed n_pseudo");
  if (!(glm_prior_sd > 0)) fail(ErrorKind::Validation, "glm.prior_sd must be > 0");
  for (const auto& b : stack_options().bart) b.validate();
}

StackOptions RunConfig::stack_options() const {
  StackOptions o;
  o.bart = bart;
  for (auto& b : o.bart) {
    b.n_burn = burn;
    b.n_keep = keep_per_chain();
    b.thin = thin;
  }
  o.n_chains = chains;
  o.seed = seed;
  o.workers = workers;
  return o;
}

baselines::GlmStackOptions RunConfig::glm_options() const {
  baselines::GlmStackOptions o;
  o.glm.n_burn = burn;
  o.glm.n_keep = keep_per_chain();
  o.glm.thin = thin;
  o.glm.prior_sd = glm_prior_sd;
  o.n_chains = chains;
  o.seed = seed;
  o.workers = workers;
  return o;
}

gcomp::GcompOptions RunConfig::gcomp_options() const {
  gcomp::GcompOptions o;
  o.n_pseudo = static_cast<size_t>(n_pseudo);
  o.n_blocks = blocks;
  o.chi = chi;
  o.gamma = gamma;
  o.estimand = estimand;
  o.seed = seed;
  o.workers = workers;
  return o;
}

SensitivitySource RunConfig::sensitivity_source(const CohortDataset& data) const {
  SensitivitySource s;
  s.mode = sensitivity;
  s.n_waves = data.n_waves;
  int nw = data.n_waves;
  bool overrides = !bound_xi.empty() || !bound_gamma.empty() || !bound_delta.empty() || !bound_nu.empty();
  if (sensitivity == SensitivityMode::Prior || overrides) {
    s.bounds = compute_bounds(data);
    if (!bound_xi.empty()) s.bounds.xi_upper = per_wave(bound_xi, nw, "bounds.xi");
    if (!bound_gamma.empty()) s.bounds.gamma_lower = per_wave(bound_gamma, nw, "bounds.gamma");
    if (!bound_delta.empty()) s.bounds.delta_upper = per_wave(bound_delta, nw, "bounds.delta");
    if (!bound_nu.empty()) s.bounds.nu_upper = per_wave(bound_nu, nw, "bounds.nu");
    s.bounds.validate();
  }
  if (sensitivity == SensitivityMode::Fixed) {
    auto z = zero_sensitivity(nw);
    s.fixed.xi = fixed_xi.empty() ? z.xi : per_wave(fixed_xi, nw, "fixed.xi");
    s.fixed.gamma = fixed_gamma.empty() ? z.gamma : per_wave(fixed_gamma, nw, "fixed.gamma");
    s.fixed.delta = fixed_delta.empty() ? z.delta : per_wave(fixed_delta, nw, "fixed.delta");
    s.fixed.nu = fixed_nu.empty() ? z.nu : per_wave(fixed_nu, nw, "fixed.nu");
    for (size_t k = 1; k < s.fixed.xi.size(); ++k) {
      if (s.fixed.xi[k] < 0 || s.fixed.delta[k] < 0 || s.fixed.nu[k] < 0 || s.fixed.gamma[k] > 0)
        fail(ErrorKind::Validation, "fixed sensitivity values violate sign constraints (xi, delta, nu >= 0, gamma <= 0)");
    }
  }
  return s;
}

}  // namespace sace
