#include "sace/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sace/error.hpp"
#include "sace/parallel.hpp"

namespace sace::diagnostics {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

struct Record {
  std::vector<double> y;
  std::vector<int> z, w;
};

// log of the mean of exp(-l) over draws, returned negated: log CPO
double log_cpo(const double* l, size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t d = 0; d < n; ++d) mx = std::max(mx, -l[d]);
  double s = 0;
  for (size_t d = 0; d < n; ++d) s += std::exp(-l[d] - mx);
  return -(mx + std::log(s / static_cast<double>(n)));
}

}  // namespace

std::vector<double> LpmlReport::cpo() const {
  std::vector<double> c(log_cpo.size());
  for (size_t i = 0; i < c.size(); ++i) c[i] = std::exp(log_cpo[i]);
  return c;
}

LpmlReport lpml(const PosteriorStack& stack, const CohortDataset& data, int workers) {
  size_t D = static_cast<size_t>(stack.n_chains()) * static_cast<size_t>(stack.n_keep());
  if (D < 2) fail(ErrorKind::InvalidArgument, "need >= 2 draws");
  if (stack.n_waves() != data.n_waves || stack.n_cells() != data.n_cells)
    fail(ErrorKind::Mismatch, "stack and dataset shapes differ");
  size_t n = data.size();
  int J = data.last_wave();
  auto nw = static_cast<size_t>(J + 1);

  std::vector<Record> recs(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& p = data.people[i];
    auto& r = recs[i];
    r.y.assign(nw, 0);
    r.z.assign(nw, 0);
    r.w.assign(nw, 0);
    for (size_t k = 0; k < nw; ++k) {
      r.y[k] = p.waves[k].y.value_or(0.0);
      r.z[k] = p.waves[k].z.value_or(0);
      r.w[k] = p.waves[k].w.value_or(0);
    }
  }
  std::vector<std::array<FeatureLayout, kFactorCount>> lay(nw);
  size_t width = 0;
  for (int k = 0; k <= J; ++k)
    for (int f = 0; f < kFactorCount; ++f)
      if (is_modeled(static_cast<Factor>(f), k)) {
        lay[static_cast<size_t>(k)][static_cast<size_t>(f)] = layout_for(static_cast<Factor>(f), k, data.n_cells);
        width = std::max(width, static_cast<size_t>(lay[static_cast<size_t>(k)][static_cast<size_t>(f)].size()));
      }

  // ll[(f+1) * n * D + i * D + d]; slot 0 is the baseline term, f+1 the factor
  constexpr size_t kSlots = kFactorCount + 1;
  std::vector<double> ll(kSlots * n * D, 0.0);
  parallel_for(
      D,
      [&](size_t d) {
        auto model = stack.draw(static_cast<int>(d / static_cast<size_t>(stack.n_keep())),
                                static_cast<int>(d % static_cast<size_t>(stack.n_keep())));
        std::vector<double> x(width);
        auto pi = model->baseline();
        for (size_t i = 0; i < n; ++i) {
          const auto& p = data.people[i];
          const auto& r = recs[i];
          auto view = [&](const FeatureLayout& l) {
            return HistoryView{std::span(r.y).first(static_cast<size_t>(l.n_y)),
                               std::span(r.z).first(static_cast<size_t>(l.n_z)),
                               std::span(r.w).first(static_cast<size_t>(l.n_w)), p.x0};
          };
          auto add = [&](size_t slot, double v, Factor f, int k) {
            if (!std::isfinite(v))
              fail(ErrorKind::Runtime, "non-finite likelihood for record " + p.id + " factor " +
                                           (slot == 0 ? std::string("x0") : std::string(factor_name(f)) + "_" + std::to_string(k)));
            ll[slot * n * D + i * D + d] += v;
          };
          auto bern = [&](Factor f, int k, int val) {
            const auto& l = lay[static_cast<size_t>(k)][static_cast<size_t>(f)];
            encode(l, view(l), x.data());
            double q = model->prob(f, k, x.data());
            add(static_cast<size_t>(f) + 1, std::log(val ? q : 1.0 - q), f, k);
          };
          auto gauss = [&](int k) {
            const auto& l = lay[static_cast<size_t>(k)][0];
            encode(l, view(l), x.data());
            double mu = model->mean_y(k, x.data()), sd = model->sd_y(k);
            double zz = (r.y[static_cast<size_t>(k)] - mu) / sd;
            add(1, -0.5 * zz * zz - std::log(sd) - kLogSqrt2Pi, Factor::Y, k);
          };
          add(0, std::log(pi[static_cast<size_t>(p.x0)]), Factor::Y, 0);
          bern(Factor::W, 0, r.w[0]);
          gauss(0);
          for (int k = 1; k <= J; ++k) {
            const auto& prev = p.waves[static_cast<size_t>(k - 1)];
            const auto& cur = p.waves[static_cast<size_t>(k)];
            if (prev.r != 1) break;
            bern(Factor::S, k, cur.s);
            if (cur.s != 1) break;
            bern(Factor::R, k, cur.r);
            if (cur.r != 1) break;
            bern(Factor::Z, k, r.z[static_cast<size_t>(k)]);
            bern(Factor::W, k, r.w[static_cast<size_t>(k)]);
            gauss(k);
          }
        }
      },
      workers);

  LpmlReport rep;
  rep.n_draws = D;
  rep.log_cpo.assign(n, 0.0);
  std::vector<double> tot(D);
  for (size_t i = 0; i < n; ++i) {
    for (size_t d = 0; d < D; ++d) {
      double s = 0;
      for (size_t slot = 0; slot < kSlots; ++slot) s += ll[slot * n * D + i * D + d];
      tot[d] = s;
    }
    rep.log_cpo[i] = log_cpo(tot.data(), D);
    rep.total += rep.log_cpo[i];
    rep.baseline += log_cpo(&ll[i * D], D);
    for (int f = 0; f < kFactorCount; ++f)
      rep.by_factor[static_cast<size_t>(f)] += log_cpo(&ll[(static_cast<size_t>(f) + 1) * n * D + i * D], D);
  }
  return rep;
}

double quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) fail(ErrorKind::InvalidArgument, "quantile of empty sample");
  double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  auto lo = static_cast<size_t>(std::floor(h));
  size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Summary summarize(std::span<const double> samples) {
  if (samples.empty()) fail(ErrorKind::InvalidArgument, "cannot summarize an empty sample");
  Summary s;
  s.n = samples.size();
  double m = 0;
  for (double v : samples) m += v;
  m /= static_cast<double>(s.n);
  double v2 = 0;
  for (double v : samples) v2 += (v - m) * (v - m);
  s.mean = m;
  s.sd = s.n > 1 ? std::sqrt(v2 / static_cast<double>(s.n - 1)) : 0.0;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  s.q025 = quantile(sorted, 0.025);
  s.q50 = quantile(sorted, 0.5);
  s.q975 = quantile(sorted, 0.975);
  return s;
}

TraceStat trace_stats(const std::vector<std::vector<double>>& chains) {
  TraceStat t;
  if (chains.empty()) return t;
  size_t len = chains[0].size();
  for (const auto& c : chains) len = std::min(len, c.size());
  std::vector<std::vector<double>> parts;
  if (len >= 4) {
    size_t half = len / 2;
    for (const auto& c : chains) {
      parts.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
      parts.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
    }
  } else {
    for (const auto& c : chains) parts.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(len));
  }
  t.n_chains = parts.size();
  t.n_per_chain = parts.empty() ? 0 : parts[0].size();
  size_t m = t.n_chains, nn = t.n_per_chain;
  bool constant = true;
  double first = nn > 0 ? parts[0][0] : 0.0;
  for (const auto& p : parts)
    for (double v : p) constant = constant && v == first;
  if (constant) return t;
  if (m < 2 || nn < 2) {
    t.rhat = std::numeric_limits<double>::quiet_NaN();
    return t;
  }
  std::vector<double> means(m), vars(m);
  double grand = 0;
  for (size_t c = 0; c < m; ++c) {
    double s = 0;
    for (double v : parts[c]) s += v;
    means[c] = s / static_cast<double>(nn);
    double q = 0;
    for (double v : parts[c]) q += (v - means[c]) * (v - means[c]);
    vars[c] = q / static_cast<double>(nn - 1);
    grand += means[c];
  }
  grand /= static_cast<double>(m);
  double B = 0, W = 0;
  for (size_t c = 0; c < m; ++c) {
    B += (means[c] - grand) * (means[c] - grand);
    W += vars[c];
  }
  auto dn = static_cast<double>(nn);
  B *= dn / static_cast<double>(m - 1);
  W /= static_cast<double>(m);
  if (!(W > 0)) {
    t.rhat = std::numeric_limits<double>::infinity();
    t.flagged = true;
    return t;
  }
  t.rhat = std::sqrt(((dn - 1.0) / dn * W + B / dn) / W);
  t.flagged = t.rhat > 1.1;
  return t;
}

}  // namespace sace::diagnostics
