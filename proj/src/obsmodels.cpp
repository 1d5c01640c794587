#include "sace/obsmodels.hpp"

#include <set>

#include "sace/error.hpp"
#include "sace/parallel.hpp"

namespace sace {

double cond_mean_y(const ObservedDataModel& m, int wave, const HistoryView& h) {
  if (wave < 0 || wave >= m.n_waves()) fail(ErrorKind::InvalidArgument, "wave out of range");
  auto l = layout_for(Factor::Y, wave, m.n_cells());
  std::vector<double> x(static_cast<size_t>(l.size()));
  encode(l, h, x.data());
  return m.mean_y(wave, x.data());
}

double cond_prob(const ObservedDataModel& m, Factor f, int wave, const HistoryView& h) {
  if (f == Factor::Y) fail(ErrorKind::InvalidArgument, "cond_prob needs a binary factor");
  if (wave < 0 || wave >= m.n_waves()) fail(ErrorKind::InvalidArgument, "wave out of range");
  auto l = layout_for(f, wave, m.n_cells());
  std::vector<double> x(static_cast<size_t>(l.size()));
  encode(l, h, x.data());
  return m.prob(f, wave, x.data());
}

std::vector<int> sample_baseline(std::span<const double> pi, size_t n, rng::Engine& rng) {
  std::vector<int> out(n);
  for (auto& c : out) c = rng::categorical(pi, rng.uniform());
  return out;
}

std::vector<double> baseline_counts(const CohortDataset& data) {
  std::vector<double> c(static_cast<size_t>(data.n_cells), 0.0);
  for (const auto& p : data.people) c[static_cast<size_t>(p.x0)] += 1.0;
  return c;
}

void BartStack::index() {
  slot_.assign(static_cast<size_t>(waves * kFactorCount), -1);
  for (size_t i = 0; i < factors.size(); ++i)
    slot_[static_cast<size_t>(factors[i].wave * kFactorCount + static_cast<int>(factors[i].factor))] =
        static_cast<int>(i);
}

const FactorDraws& BartStack::get(Factor f, int wave) const {
  if (wave < 0 || wave >= waves) fail(ErrorKind::InvalidArgument, "wave out of range");
  int s = slot_.empty() ? -1 : slot_[static_cast<size_t>(wave * kFactorCount + static_cast<int>(f))];
  if (s < 0) fail(ErrorKind::InvalidArgument, std::string("no model for ") + factor_name(f) + "_" + std::to_string(wave));
  return factors[static_cast<size_t>(s)];
}

std::unique_ptr<ObservedDataModel> BartStack::draw(int chain, int m) const {
  return std::make_unique<ModelStackDraw>(*this, chain, m);
}

ModelStackDraw::ModelStackDraw(const BartStack& stack, int chain, int m) : stack_(stack), chain_(chain), m_(m) {
  if (chain < 0 || chain >= stack.chains || m < 0 || m >= stack.keep)
    fail(ErrorKind::InvalidArgument, "stack draw index out of range");
  forests_.assign(static_cast<size_t>(stack.waves * kFactorCount), nullptr);
  for (const auto& fd : stack.factors)
    forests_[static_cast<size_t>(fd.wave * kFactorCount + static_cast<int>(fd.factor))] =
        &fd.chains[static_cast<size_t>(chain)][static_cast<size_t>(m)];
}

const bart::ForestDraw& ModelStackDraw::forest(Factor f, int wave) const {
  const bart::ForestDraw* p = nullptr;
  if (wave >= 0 && wave < stack_.waves) p = forests_[static_cast<size_t>(wave * kFactorCount + static_cast<int>(f))];
  if (!p) fail(ErrorKind::InvalidArgument, std::string("no model for ") + factor_name(f) + "_" + std::to_string(wave));
  return *p;
}

double ModelStackDraw::mean_y(int wave, const double* x) const { return forest(Factor::Y, wave).mean_unchecked(x); }
double ModelStackDraw::sd_y(int wave) const { return forest(Factor::Y, wave).sigma; }
double ModelStackDraw::prob(Factor f, int wave, const double* x) const { return forest(f, wave).prob_unchecked(x); }
std::span<const double> ModelStackDraw::baseline() const {
  return stack_.baseline_draws[static_cast<size_t>(chain_)][static_cast<size_t>(m_)];
}

BartStack fit_stack(const CohortDataset& data, const StackOptions& opts) {
  if (opts.n_chains < 1) fail(ErrorKind::InvalidArgument, "need at least one chain");
  int keep = opts.bart[0].n_keep;
  for (const auto& c : opts.bart) {
    c.validate();
    if (c.n_keep != keep) fail(ErrorKind::InvalidArgument, "all factors must keep the same number of draws");
  }

  BartStack st;
  st.waves = data.n_waves;
  st.cells = data.n_cells;
  st.chains = opts.n_chains;
  st.keep = keep;

  std::vector<ModelSubset> subsets;
  for (int j = 0; j < data.n_waves; ++j)
    for (int f = 0; f < kFactorCount; ++f) {
      auto fac = static_cast<Factor>(f);
      if (!is_modeled(fac, j)) continue;
      subsets.push_back(model_subset(data, fac, j));
      FactorDraws fd;
      fd.factor = fac;
      fd.wave = j;
      fd.layout = subsets.back().layout;
      fd.chains.resize(static_cast<size_t>(opts.n_chains));
      for (int c = 0; c < opts.n_chains; ++c)
        fd.seeds.push_back(rng::derive(opts.seed, rng::Purpose::Bart,
                                       {static_cast<uint64_t>(f), static_cast<uint64_t>(j), static_cast<uint64_t>(c)}));
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
        auto cfg = opts.bart[static_cast<size_t>(fd.factor)];
        cfg.seed = fd.seeds[c];
        auto res = fd.factor == Factor::Y ? bart::fit_continuous(sub.X, sub.response, cfg)
                                          : bart::fit_probit(sub.X, sub.response, cfg);
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
    for (int m = 0; m < keep; ++m) {
      rng::Engine eng(rng::derive(opts.seed, rng::Purpose::Dirichlet, {static_cast<uint64_t>(c), static_cast<uint64_t>(m)}));
      st.baseline_draws[static_cast<size_t>(c)].push_back(eng.dirichlet(alpha));
    }
  st.index();
  return st;
}

}  // namespace sace
