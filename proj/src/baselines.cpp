#include "sace/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sace/diagnostics.hpp"
#include "sace/error.hpp"
#include "sace/parallel.hpp"

namespace sace::baselines {

namespace {

class GlmStackDraw : public ObservedDataModel {
 public:
  GlmStackDraw(const GlmStack& s, int chain, int m) : s_(s), chain_(chain), m_(m) {
    if (chain < 0 || chain >= s.chains || m < 0 || m >= s.keep)
      fail(ErrorKind::InvalidArgument, "stack draw index out of range");
    draws_.assign(static_cast<size_t>(s.waves * kFactorCount), nullptr);
    for (const auto& f : s.factors)
      draws_[static_cast<size_t>(f.wave * kFactorCount + static_cast<int>(f.factor))] =
          &f.chains[static_cast<size_t>(chain)][static_cast<size_t>(m)];
  }
  int n_waves() const override { return s_.waves; }
  int n_cells() const override { return s_.cells; }
  double mean_y(int wave, const double* x) const override { return get(Factor::Y, wave).mean(x); }
  double sd_y(int wave) const override { return get(Factor::Y, wave).sigma; }
  double prob(Factor f, int wave, const double* x) const override { return get(f, wave).prob(x); }
  std::span<const double> baseline() const override {
    return s_.baseline_draws[static_cast<size_t>(chain_)][static_cast<size_t>(m_)];
  }

 private:
  const glm::GlmDraw& get(Factor f, int wave) const {
    const glm::GlmDraw* p = nullptr;
    if (wave >= 0 && wave < s_.waves) p = draws_[static_cast<size_t>(wave * kFactorCount + static_cast<int>(f))];
    if (!p) fail(ErrorKind::InvalidArgument, std::string("no model for ") + factor_name(f) + "_" + std::to_string(wave));
    return *p;
  }
  const GlmStack& s_;
  int chain_, m_;
  std::vector<const glm::GlmDraw*> draws_;
};

// first x0 column is the reference level
std::vector<int> reference_column(const FeatureLayout& l) { return {l.n_y + l.n_z + l.n_w}; }

// encodes individual i's observed history for a factor at a wave
void person_row(const CohortDataset& data, size_t i, const FeatureLayout& l, double* out) {
  const auto& p = data.people[i];
  double* o = out;
  for (int k = 0; k < l.n_y; ++k) *o++ = p.waves[static_cast<size_t>(k)].y.value_or(0.0);
  for (int k = 0; k < l.n_z; ++k) *o++ = p.waves[static_cast<size_t>(k)].z.value_or(0);
  for (int k = 0; k < l.n_w; ++k) *o++ = p.waves[static_cast<size_t>(k)].w.value_or(0);
  for (int c = 0; c < l.n_cells; ++c) *o++ = c == p.x0 ? 1.0 : 0.0;
}

int z_of(const Individual& p, int k) { return p.waves[static_cast<size_t>(k)].z.value_or(0); }

// Fitted per-wave propensity and retention models.
struct IptwModels {
  std::vector<glm::LogitFit> z, r;   // indexed by wave, entry 0 unused
  std::vector<double> z_rate, r_rate;
  std::vector<FeatureLayout> z_lay, r_lay;
};

IptwModels fit_iptw_models(const CohortDataset& data) {
  int J = data.last_wave();
  IptwModels m;
  auto nw = static_cast<size_t>(J + 1);
  m.z.resize(nw);
  m.r.resize(nw);
  m.z_rate.assign(nw, 0);
  m.r_rate.assign(nw, 1);
  m.z_lay.resize(nw);
  m.r_lay.resize(nw);
  for (int k = 1; k <= J; ++k) {
    auto kk = static_cast<size_t>(k);
    auto zs = model_subset(data, Factor::Z, k);
    // propensity among individuals still unexposed
    int zcol = zs.layout.n_y + k - 1;
    Matrix X(0, zs.X.cols);
    std::vector<double> b;
    for (size_t i = 0; i < zs.n(); ++i) {
      if (zs.X(i, static_cast<size_t>(zcol)) != 0.0) continue;
      X.data.insert(X.data.end(), zs.X.row(i), zs.X.row(i) + zs.X.cols);
      ++X.rows;
      b.push_back(zs.response[i]);
    }
    if (b.empty()) fail(ErrorKind::Runtime, "positivity failure at wave " + std::to_string(k));
    m.z_lay[kk] = zs.layout;
    m.z[kk] = glm::irls_logit(X, b, reference_column(zs.layout));
    double s = 0;
    for (double v : b) s += v;
    m.z_rate[kk] = s / static_cast<double>(b.size());

    auto rs = model_subset(data, Factor::R, k);
    m.r_lay[kk] = rs.layout;
    m.r[kk] = glm::irls_logit(rs.X, rs.response, reference_column(rs.layout));
    s = 0;
    for (double v : rs.response) s += v;
    m.r_rate[kk] = s / static_cast<double>(rs.n());
  }
  return m;
}

WeightTable weights_from(const CohortDataset& data, const IptwModels& m, bool stabilized) {
  int J = data.last_wave();
  auto nw = static_cast<size_t>(J + 1);
  WeightTable t;
  t.stabilized = stabilized;
  size_t n = data.size();
  t.treatment.assign(n, std::vector<double>(nw, 0.0));
  t.censoring = t.treatment;
  t.combined = t.treatment;
  t.defined.assign(n, std::vector<int>(nw, 0));
  std::vector<double> buf;
  for (size_t i = 0; i < n; ++i) {
    const auto& p = data.people[i];
    double tw = 1.0, cw = 1.0;
    for (int k = 1; k <= J; ++k) {
      auto kk = static_cast<size_t>(k);
      const auto& rec = p.waves[kk];
      if (rec.r != 1 || rec.s != 1 || z_of(p, k - 1) != 0) break;
      buf.resize(static_cast<size_t>(std::max(m.z_lay[kk].size(), m.r_lay[kk].size())));
      person_row(data, i, m.r_lay[kk], buf.data());
      double pr = m.r[kk].prob(buf.data());
      cw *= (stabilized ? m.r_rate[kk] : 1.0) / pr;
      person_row(data, i, m.z_lay[kk], buf.data());
      double pz = m.z[kk].prob(buf.data());
      int z = z_of(p, k);
      double num = stabilized ? (z ? m.z_rate[kk] : 1.0 - m.z_rate[kk]) : 1.0;
      tw *= num / (z ? pz : 1.0 - pz);
      t.treatment[i][kk] = tw;
      t.censoring[i][kk] = cw;
      t.combined[i][kk] = tw * cw;
      t.defined[i][kk] = 1;
    }
  }
  return t;
}

struct PointEstimate {
  double tau = 0;
  std::vector<double> contrasts, surv;
};

PointEstimate point_estimate(const CohortDataset& data, bool stabilized, WeightTable* keep_weights) {
  auto models = fit_iptw_models(data);
  auto t = weights_from(data, models, stabilized);
  int J = data.last_wave();
  auto nw = static_cast<size_t>(J + 1);
  PointEstimate pe;
  pe.contrasts.assign(nw, 0);
  pe.surv.assign(nw, 0);
  for (int j = 1; j <= J; ++j) {
    auto jj = static_cast<size_t>(j);
    double s1 = 0, w1 = 0, s0 = 0, w0 = 0, alive = 0;
    for (size_t i = 0; i < data.size(); ++i) {
      const auto& p = data.people[i];
      if (p.waves[jj].s == 1) alive += 1;
      if (!t.defined[i][jj]) continue;
      double w = t.combined[i][jj], y = *p.waves[jj].y;
      if (z_of(p, j) == 1) {
        s1 += w * y;
        w1 += w;
      } else {
        s0 += w * y;
        w0 += w;
      }
    }
    if (!(w1 > 0) || !(w0 > 0)) fail(ErrorKind::Runtime, "positivity failure at wave " + std::to_string(j));
    pe.contrasts[jj] = s1 / w1 - s0 / w0;
    pe.surv[jj] = alive / static_cast<double>(data.size());
  }
  pe.tau = pooled_effect(std::span(pe.contrasts).subspan(1), std::span(pe.surv).subspan(1));
  if (keep_weights) *keep_weights = std::move(t);
  return pe;
}

}  // namespace

const GlmFactorDraws* GlmStack::find(Factor f, int wave) const {
  for (const auto& fd : factors)
    if (fd.factor == f && fd.wave == wave) return &fd;
  return nullptr;
}

std::unique_ptr<ObservedDataModel> GlmStack::draw(int chain, int m) const {
  return std::make_unique<GlmStackDraw>(*this, chain, m);
}

GlmStack fit_glm_stack(const CohortDataset& data, const GlmStackOptions& opts) {
  if (opts.n_chains < 1) fail(ErrorKind::InvalidArgument, "need at least one chain");
  GlmStack st;
  st.waves = data.n_waves;
  st.cells = data.n_cells;
  st.chains = opts.n_chains;
  st.keep = opts.glm.n_keep;
  std::vector<ModelSubset> subsets;
  for (int j = 0; j < data.n_waves; ++j)
    for (int f = 0; f < kFactorCount; ++f) {
      auto fac = static_cast<Factor>(f);
      if (!is_modeled(fac, j)) continue;
      subsets.push_back(model_subset(data, fac, j));
      GlmFactorDraws fd;
      fd.factor = fac;
      fd.wave = j;
      fd.layout = subsets.back().layout;
      fd.chains.resize(static_cast<size_t>(opts.n_chains));
      st.factors.push_back(std::move(fd));
    }
  size_t nf = st.factors.size();
  std::vector<std::vector<std::string>> warn(nf * static_cast<size_t>(opts.n_chains));
  parallel_for(
      nf * static_cast<size_t>(opts.n_chains),
      [&](size_t task) {
        size_t fi = task % nf, c = task / nf;
        auto& fd = st.factors[fi];
        const auto& sub = subsets[fi];
        auto cfg = opts.glm;
        cfg.seed = rng::derive(opts.seed, rng::Purpose::Glm,
                               {static_cast<uint64_t>(fd.factor), static_cast<uint64_t>(fd.wave), c});
        auto ex = reference_column(sub.layout);
        auto res = fd.factor == Factor::Y ? glm::fit_linear(sub.X, sub.response, cfg, ex)
                                          : glm::fit_logit(sub.X, sub.response, cfg, ex);
        fd.chains[c] = std::move(res.draws);
        warn[task] = std::move(res.warnings);
      },
      opts.workers);
  std::set<std::string> seen;
  for (size_t task = 0; task < warn.size(); ++task)
    for (const auto& w : warn[task]) {
      const auto& fd = st.factors[task % nf];
      auto msg = std::string(factor_name(fd.factor)) + "_" + std::to_string(fd.wave) + ": " + w;
      if (seen.insert(msg).second) st.notes.push_back(msg);
    }
  auto counts = baseline_counts(data);
  std::vector<double> alpha(counts.size());
  for (size_t k = 0; k < counts.size(); ++k) alpha[k] = 1.0 + counts[k];
  st.baseline_draws.resize(static_cast<size_t>(opts.n_chains));
  for (int c = 0; c < opts.n_chains; ++c)
    for (int m = 0; m < st.keep; ++m) {
      rng::Engine eng(rng::derive(opts.seed, rng::Purpose::Dirichlet, {static_cast<uint64_t>(c), static_cast<uint64_t>(m)}));
      st.baseline_draws[static_cast<size_t>(c)].push_back(eng.dirichlet(alpha));
    }
  return st;
}

gcomp::SaceResult bpgc_estimate(const CohortDataset& data, const GlmStackOptions& fit, const SensitivitySource& sens,
                                const gcomp::GcompOptions& opt) {
  require_valid(data);
  auto stack = fit_glm_stack(data, fit);
  auto res = gcomp::estimate_from_stack(stack, sens, opt);
  res.method = "BP-GC";
  return res;
}

WeightTable iptw_weights(const CohortDataset& data, bool stabilized) {
  require_valid(data);
  return weights_from(data, fit_iptw_models(data), stabilized);
}

IptwResult iptw_estimate(const CohortDataset& data, bool stabilized, int bootstrap_B, uint64_t seed, int workers) {
  require_valid(data);
  if (bootstrap_B < 0) fail(ErrorKind::InvalidArgument, "bootstrap count must be >= 0");
  IptwResult out;
  out.method = stabilized ? "IPTW-SW" : "IPTW-W";
  auto pe = point_estimate(data, stabilized, &out.weights);
  out.estimate = pe.tau;
  out.contrasts = pe.contrasts;
  out.surv = pe.surv;
  if (bootstrap_B == 0) return out;

  auto B = static_cast<size_t>(bootstrap_B);
  std::vector<double> est(B, 0.0);
  std::vector<int> ok(B, 0);
  parallel_for(
      B,
      [&](size_t b) {
        rng::Engine eng(rng::derive(seed, rng::Purpose::Bootstrap, {b}));
        CohortDataset bs;
        bs.n_waves = data.n_waves;
        bs.n_cells = data.n_cells;
        bs.cell_labels = data.cell_labels;
        bs.people.reserve(data.size());
        for (size_t i = 0; i < data.size(); ++i) bs.people.push_back(data.people[eng.below(data.size())]);
        try {
          est[b] = point_estimate(bs, stabilized, nullptr).tau;
          ok[b] = 1;
        } catch (const Error&) {
          ok[b] = 0;
        }
      },
      workers);
  for (size_t b = 0; b < B; ++b) {
    if (ok[b])
      out.boot.push_back(est[b]);
    else
      ++out.boot_failed;
  }
  if (out.boot_failed > 0)
    out.warnings.push_back(std::to_string(out.boot_failed) + " bootstrap replicates failed (positivity) and were dropped");
  if (out.boot.empty()) return out;
  auto s = diagnostics::summarize(out.boot);
  out.lo = s.q025;
  out.hi = s.q975;
  out.has_ci = true;
  return out;
}

double pooled_effect(std::span<const double> contrasts, std::span<const double> surv) {
  if (contrasts.size() != surv.size()) fail(ErrorKind::InvalidArgument, "contrast and survival lengths differ");
  if (contrasts.empty()) fail(ErrorKind::InvalidArgument, "no waves to pool");
  double total = 0;
  for (double s : surv) {
    if (!(s >= 0) || s > 1) fail(ErrorKind::InvalidArgument, "survival fractions must lie in [0,1]");
    total += s;
  }
  if (!(total > 0)) fail(ErrorKind::InvalidArgument, "all survival fractions are zero");
  double num = 0, den = 0;
  for (size_t j = 0; j < surv.size(); ++j) {
    double s = std::max(surv[j], gcomp::kFloor);
    num += contrasts[j] * s;
    den += s;
  }
  return num / den;
}

}  // namespace sace::baselines
