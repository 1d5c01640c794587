#include "sace/gcomp.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "sace/error.hpp"
#include "sace/parallel.hpp"

namespace sace::gcomp {

const char* to_string(ChiVariant v) { return v == ChiVariant::A3 ? "a3" : "first_principles"; }
const char* to_string(GammaMode m) { return m == GammaMode::First ? "first" : "all"; }
const char* to_string(Estimand e) { return e == Estimand::Sace ? "sace" : "survivor_contrast"; }

ChiVariant parse_chi_variant(std::string_view s) {
  if (s == "a3") return ChiVariant::A3;
  if (s == "first_principles" || s == "fp") return ChiVariant::FirstPrinciples;
  fail(ErrorKind::Parse, "unknown chi variant '" + std::string(s) + "' (a3|first_principles)");
}
GammaMode parse_gamma_mode(std::string_view s) {
  if (s == "first") return GammaMode::First;
  if (s == "all") return GammaMode::All;
  fail(ErrorKind::Parse, "unknown gamma mode '" + std::string(s) + "' (first|all)");
}
Estimand parse_estimand(std::string_view s) {
  if (s == "sace") return Estimand::Sace;
  if (s == "survivor_contrast") return Estimand::SurvivorContrast;
  fail(ErrorKind::Parse, "unknown estimand '" + std::string(s) + "' (sace|survivor_contrast)");
}

double confounding_c(const Regime& g, const SensitivityDraw& s, int wave) {
  double xi = s.xi[static_cast<size_t>(wave)];
  return g.exposed() ? -xi : xi;
}

double phi_value(double mu, double shift, double c, double pi_reg) { return mu + shift - c * (1.0 - pi_reg); }

double survival_given_dropout(double pi_r, double pi_s) {
  double num = (1.0 - pi_r) * pi_s;
  return num / std::max(num + 1.0 - pi_s, kFloor);
}

double regime_nu(double nu, double pi_z1, int z) {
  double v = std::clamp(nu, 0.0, std::max(0.0, 1.0 - pi_z1));
  return z == 1 ? v : -v;
}

double dropout_factor(ChiVariant v, double pi_reg, double A, double nu_reg) {
  double num = pi_reg * A;
  if (v == ChiVariant::A3) return num / std::max(pi_reg * (nu_reg - nu_reg * A + A), kFloor);
  return num / std::max((nu_reg + pi_reg) * (1.0 - A) + pi_reg * A, kFloor);
}

bool gamma_applies(GammaMode mode, int r_prev, int r) {
  if (r != 0) return false;
  return mode == GammaMode::All || r_prev == 1;
}

namespace {

// Layouts for every (factor, wave), built once per model.
struct Layouts {
  std::vector<std::array<FeatureLayout, kFactorCount>> by_wave;
  size_t max_size = 0;

  explicit Layouts(int n_waves, int n_cells) {
    by_wave.resize(static_cast<size_t>(n_waves));
    for (int k = 0; k < n_waves; ++k)
      for (int f = 0; f < kFactorCount; ++f) {
        auto fac = static_cast<Factor>(f);
        if (!is_modeled(fac, k)) continue;
        by_wave[static_cast<size_t>(k)][static_cast<size_t>(f)] = layout_for(fac, k, n_cells);
        max_size = std::max(max_size, static_cast<size_t>(by_wave[static_cast<size_t>(k)][static_cast<size_t>(f)].size()));
      }
  }
  const FeatureLayout& at(Factor f, int k) const { return by_wave[static_cast<size_t>(k)][static_cast<size_t>(f)]; }
};

// One pseudo-individual's path; z holds the regime values.
struct Path {
  int x0 = 0;
  std::vector<double> y;
  std::vector<int> z, w, r, s;

  void reset(int last_wave) {
    auto n = static_cast<size_t>(last_wave + 1);
    y.assign(n, 0.0);
    z.assign(n, 0);
    w.assign(n, 0);
    r.assign(n, 0);
    s.assign(n, 0);
  }
};

void fill(const FeatureLayout& l, const Path& p, double* out) {
  double* o = out;
  for (int k = 0; k < l.n_y; ++k) *o++ = p.y[static_cast<size_t>(k)];
  for (int k = 0; k < l.n_z; ++k) *o++ = p.z[static_cast<size_t>(k)];
  for (int k = 0; k < l.n_w; ++k) *o++ = p.w[static_cast<size_t>(k)];
  for (int c = 0; c < l.n_cells; ++c) *o++ = c == p.x0 ? 1.0 : 0.0;
}

struct Ctx {
  const ObservedDataModel& model;
  const Layouts& lay;
  mutable std::vector<double> buf;

  double prob(Factor f, int k, const Path& p) const {
    fill(lay.at(f, k), p, buf.data());
    return model.prob(f, k, buf.data());
  }
  double mean(int k, const Path& p) const {
    fill(lay.at(Factor::Y, k), p, buf.data());
    return model.mean_y(k, buf.data());
  }
};

// x0 at slot 0; wave k uses slots 2k+1 (s, r) and 2k+2 (w, y)
void sample_path(const Ctx& ctx, const Regime& regime, const SensitivityDraw& sens, GammaMode mode,
                 const rng::CounterStream& stream, uint64_t g, int last_wave, Path& p, std::span<const double> pi_x0) {
  p.reset(last_wave);
  p.x0 = rng::categorical(pi_x0, stream.uniform2(g, 0)[0]);
  for (int k = 0; k <= last_wave; ++k) {
    auto kk = static_cast<size_t>(k);
    p.z[kk] = regime.z(k);
    if (k == 0) {
      p.s[0] = 1;
      p.r[0] = 1;
    } else {
      auto u = stream.uniform2(g, 2 * static_cast<uint64_t>(k) + 1);
      p.s[kk] = p.s[kk - 1] == 1 && u[0] < ctx.prob(Factor::S, k, p) ? 1 : 0;
      p.r[kk] = p.s[kk] == 1 && p.r[kk - 1] == 1 && u[1] < ctx.prob(Factor::R, k, p) ? 1 : 0;
    }
    auto u = stream.uniform2(g, 2 * static_cast<uint64_t>(k) + 2);
    p.w[kk] = u[0] < ctx.prob(Factor::W, k, p) ? 1 : 0;
    if (k < last_wave) {
      double shift = k > 0 && gamma_applies(mode, p.r[kk - 1], p.r[kk]) ? sens.gamma[kk] : 0.0;
      p.y[kk] = ctx.mean(k, p) + shift + ctx.model.sd_y(k) * rng::normal_quantile(u[1]);
    }
  }
}

struct DropTerms {
  double A = 1.0, pi_z1 = 0.0;
};

// Needs y up to k-1, z up to k-1 and w up to k on the path.
DropTerms drop_terms(const Ctx& ctx, const Path& p, int k) {
  auto kk = static_cast<size_t>(k);
  DropTerms t;
  double pi_r = p.r[kk - 1] == 1 ? ctx.prob(Factor::R, k, p) : 0.0;
  double pi_s = ctx.prob(Factor::S, k, p);
  t.A = survival_given_dropout(pi_r, pi_s);
  t.pi_z1 = ctx.prob(Factor::Z, k, p);
  return t;
}

double factor_at(ChiVariant v, const DropTerms& t, int z, double nu) {
  double pi_reg = z == 1 ? t.pi_z1 : 1.0 - t.pi_z1;
  return dropout_factor(v, pi_reg, t.A, regime_nu(nu, t.pi_z1, z));
}

struct TargetTerms {
  double mu0 = 0, mu1 = 0, pi_z1 = 0, shift = 0;
};

// p.z must be zero through wave j on entry; restored on exit
TargetTerms target_terms(const Ctx& ctx, Path& p, int j, const SensitivityDraw& sens, GammaMode mode) {
  auto jj = static_cast<size_t>(j);
  TargetTerms t;
  int saved = p.z[jj];
  p.z[jj] = 0;
  t.pi_z1 = ctx.prob(Factor::Z, j, p);
  t.mu0 = ctx.mean(j, p);
  p.z[jj] = 1;
  t.mu1 = ctx.mean(j, p);
  p.z[jj] = saved;
  t.shift = gamma_applies(mode, p.r[jj - 1], p.r[jj]) ? sens.gamma[jj] : 0.0;
  return t;
}

void check_regime(const Regime& g, int wave) {
  if (wave < 1) fail(ErrorKind::InvalidArgument, "target wave must be >= 1");
  if (g.exposed() && g.first_exposure != wave)
    fail(ErrorKind::InvalidArgument, "exposed regime is evaluated only at its first exposure wave");
}

void load_path(const PseudoSample& ps, size_t i, Path& p) {
  p.reset(ps.last_wave);
  p.x0 = ps.x0[i];
  for (int k = 0; k <= ps.last_wave; ++k) {
    auto kk = static_cast<size_t>(k);
    p.z[kk] = ps.regime_z[kk];
    p.w[kk] = ps.w[kk][i];
    p.r[kk] = ps.r[kk][i];
    p.s[kk] = ps.s[kk][i];
    if (k < ps.last_wave) p.y[kk] = ps.y[kk][i];
  }
}

void check_sample(const ObservedDataModel& model, const PseudoSample& ps, int wave) {
  if (wave > ps.last_wave || wave >= model.n_waves()) fail(ErrorKind::InvalidArgument, "pseudo sample too short for wave");
  for (int k = 0; k < wave; ++k)
    if (ps.regime_z[static_cast<size_t>(k)] != 0)
      fail(ErrorKind::InvalidArgument, "pseudo sample drawn under a different regime");
}

}  // namespace

PseudoSample sample_pseudo(const ObservedDataModel& model, const Regime& regime, const SensitivityDraw& sens, size_t n,
                           uint64_t stream_key, GammaMode mode, size_t first_index) {
  int last = regime.exposed() ? regime.first_exposure : model.n_waves() - 1;
  if (last < 0 || last >= model.n_waves()) fail(ErrorKind::InvalidArgument, "regime wave out of range");
  Layouts lay(model.n_waves(), model.n_cells());
  Ctx ctx{model, lay, std::vector<double>(lay.max_size)};
  rng::CounterStream stream(stream_key);

  PseudoSample ps;
  ps.last_wave = last;
  ps.first_index = first_index;
  auto nw = static_cast<size_t>(last + 1);
  ps.regime_z.resize(nw);
  for (int k = 0; k <= last; ++k) ps.regime_z[static_cast<size_t>(k)] = regime.z(k);
  ps.x0.resize(n);
  ps.y.assign(static_cast<size_t>(last), std::vector<double>(n));
  ps.w.assign(nw, std::vector<int>(n));
  ps.r.assign(nw, std::vector<int>(n));
  ps.s.assign(nw, std::vector<int>(n));
  Path p;
  auto pi = model.baseline();
  for (size_t i = 0; i < n; ++i) {
    sample_path(ctx, regime, sens, mode, stream, first_index + i, last, p, pi);
    ps.x0[i] = p.x0;
    for (size_t k = 0; k < nw; ++k) {
      ps.w[k][i] = p.w[k];
      ps.r[k][i] = p.r[k];
      ps.s[k][i] = p.s[k];
      if (k + 1 < nw) ps.y[k][i] = p.y[k];
    }
  }
  return ps;
}

std::vector<double> phi(const ObservedDataModel& model, const PseudoSample& ps, const Regime& regime,
                        const SensitivityDraw& sens, int wave, GammaMode mode) {
  check_regime(regime, wave);
  check_sample(model, ps, wave);
  Layouts lay(model.n_waves(), model.n_cells());
  Ctx ctx{model, lay, std::vector<double>(lay.max_size)};
  std::vector<double> out(ps.size());
  Path p;
  double c = confounding_c(regime, sens, wave);
  int z = regime.z(wave);
  for (size_t i = 0; i < ps.size(); ++i) {
    load_path(ps, i, p);
    auto t = target_terms(ctx, p, wave, sens, mode);
    double pi_reg = z == 1 ? t.pi_z1 : 1.0 - t.pi_z1;
    out[i] = phi_value(z == 1 ? t.mu1 : t.mu0, t.shift, c, pi_reg);
  }
  return out;
}

std::vector<double> chi(const ObservedDataModel& model, const PseudoSample& ps, const Regime& regime,
                        const SensitivityDraw& sens, int wave, ChiVariant variant) {
  check_regime(regime, wave);
  check_sample(model, ps, wave);
  Layouts lay(model.n_waves(), model.n_cells());
  Ctx ctx{model, lay, std::vector<double>(lay.max_size)};
  std::vector<double> out(ps.size(), 1.0);
  Path p;
  for (size_t i = 0; i < ps.size(); ++i) {
    load_path(ps, i, p);
    double prod = 1.0;
    for (int k = 1; k <= wave; ++k) {
      if (p.r[static_cast<size_t>(k)] == 1) continue;
      prod *= factor_at(variant, drop_terms(ctx, p, k), regime.z(k), sens.nu[static_cast<size_t>(k)]);
    }
    out[i] = prod;
  }
  return out;
}

Moments mc_integrate(std::span<const double> phi_v, std::span<const double> chi_v) {
  if (phi_v.size() != chi_v.size()) fail(ErrorKind::InvalidArgument, "phi and chi lengths differ");
  if (phi_v.empty()) fail(ErrorKind::InvalidArgument, "empty pseudo sample");
  double sp = 0, sm = 0;
  for (size_t i = 0; i < phi_v.size(); ++i) {
    sp += chi_v[i];
    sm += phi_v[i] * chi_v[i];
  }
  auto n = static_cast<double>(phi_v.size());
  return {sp / n, sm / n};
}

Moments combine_blocks(std::span<const Moments> blocks, std::span<const size_t> sizes) {
  if (blocks.size() != sizes.size() || blocks.empty()) fail(ErrorKind::InvalidArgument, "bad block list");
  double total = 0, p = 0, m = 0;
  for (size_t b = 0; b < blocks.size(); ++b) {
    auto w = static_cast<double>(sizes[b]);
    total += w;
    p += w * blocks[b].p_hat;
    m += w * blocks[b].mu_hat;
  }
  if (total <= 0) fail(ErrorKind::InvalidArgument, "empty pseudo sample");
  return {p / total, m / total};
}

TauParts tau_draw(std::span<const WaveMoments> waves, std::span<const double> delta) {
  if (waves.size() < 2 || delta.size() != waves.size())
    fail(ErrorKind::InvalidArgument, "tau_draw needs per-wave moments and deltas for waves 1..J");
  TauParts out;
  out.weights.assign(waves.size(), 0.0);
  out.contrasts.assign(waves.size(), 0.0);
  double total = 0.0;
  for (size_t j = 1; j < waves.size(); ++j) {
    const auto& w = waves[j];
    if (!(w.p_z > 0) || !(w.p_ref > 0))
      fail(ErrorKind::Runtime, "degenerate survival probability at wave " + std::to_string(j));
    out.contrasts[j] = w.mu_z / w.p_z - w.mu_ref / w.p_ref - delta[j] * (1.0 - w.p_z / w.p_ref);
    total += w.p_z;
  }
  for (size_t j = 1; j < waves.size(); ++j) {
    out.weights[j] = waves[j].p_z / total;
    out.tau += out.weights[j] * out.contrasts[j];
  }
  return out;
}

std::vector<double> SaceResult::taus() const {
  std::vector<double> t;
  t.reserve(draws.size());
  for (const auto& d : draws) t.push_back(d.tau);
  return t;
}

void BlockSums::add(const BlockSums& o) {
  if (chi_z.empty()) {
    *this = o;
    return;
  }
  n += o.n;
  auto acc = [](std::vector<double>& a, const std::vector<double>& b) {
    for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  acc(chi_z, o.chi_z);
  acc(phichi_z, o.phichi_z);
  acc(chi_ref, o.chi_ref);
  acc(phichi_ref, o.phichi_ref);
  acc(alive, o.alive);
  acc(alive_mu_z, o.alive_mu_z);
  acc(alive_mu_ref, o.alive_mu_ref);
  acc(surv_prod, o.surv_prod);
}

BlockSums evaluate_block(const ObservedDataModel& model, const SensitivityDraw& sens, const GcompOptions& opt,
                         uint64_t stream_key, size_t first, size_t count) {
  int J = model.n_waves() - 1;
  if (J < 1) fail(ErrorKind::InvalidArgument, "need at least one follow-up wave");
  Layouts lay(model.n_waves(), model.n_cells());
  Ctx ctx{model, lay, std::vector<double>(lay.max_size)};
  rng::CounterStream stream(stream_key);
  auto nw = static_cast<size_t>(J + 1);

  BlockSums out;
  out.n = count;
  for (auto* v : {&out.chi_z, &out.phichi_z, &out.chi_ref, &out.phichi_ref, &out.alive, &out.alive_mu_z,
                  &out.alive_mu_ref, &out.surv_prod})
    v->assign(nw, 0.0);

  bool contrast = opt.estimand == Estimand::SurvivorContrast;
  Regime never = Regime::never();
  Path p;
  auto pi = model.baseline();
  for (size_t i = 0; i < count; ++i) {
    sample_path(ctx, never, sens, opt.gamma, stream, first + i, J, p, pi);
    double chi_prev = 1.0, sprod = 1.0;
    for (int j = 1; j <= J; ++j) {
      auto jj = static_cast<size_t>(j);
      double f0 = 1.0, f1 = 1.0;
      if (!contrast && p.r[jj] == 0) {
        auto dt = drop_terms(ctx, p, j);
        f0 = factor_at(opt.chi, dt, 0, sens.nu[jj]);
        f1 = factor_at(opt.chi, dt, 1, sens.nu[jj]);
      }
      auto t = target_terms(ctx, p, j, sens, opt.gamma);
      if (contrast) {
        sprod *= ctx.prob(Factor::S, j, p);
        out.surv_prod[jj] += sprod;
        if (p.s[jj] == 1) {
          out.alive[jj] += 1.0;
          out.alive_mu_z[jj] += t.mu1;
          out.alive_mu_ref[jj] += t.mu0;
        }
        continue;
      }
      double xi = sens.xi[jj];
      double phi_z = phi_value(t.mu1, t.shift, -xi, t.pi_z1);
      double phi_ref = phi_value(t.mu0, t.shift, xi, 1.0 - t.pi_z1);
      double chi_z = chi_prev * f1, chi_ref = chi_prev * f0;
      out.chi_z[jj] += chi_z;
      out.phichi_z[jj] += phi_z * chi_z;
      out.chi_ref[jj] += chi_ref;
      out.phichi_ref[jj] += phi_ref * chi_ref;
      chi_prev = chi_ref;
    }
  }
  return out;
}

DrawResult assemble_draw(const BlockSums& total, const SensitivityDraw& sens, Estimand estimand) {
  DrawResult d;
  d.sens = sens;
  size_t nw = total.chi_z.size();
  d.waves.assign(nw, WaveDraw{});
  auto n = static_cast<double>(total.n);
  if (total.n == 0) fail(ErrorKind::InvalidArgument, "empty pseudo sample");
  if (estimand == Estimand::Sace) {
    std::vector<WaveMoments> wm(nw);
    for (size_t j = 1; j < nw; ++j)
      wm[j] = {total.phichi_z[j] / n, total.chi_z[j] / n, total.phichi_ref[j] / n, total.chi_ref[j] / n};
    auto parts = tau_draw(wm, sens.delta);
    d.tau = parts.tau;
    for (size_t j = 1; j < nw; ++j)
      d.waves[j] = {wm[j].p_z, wm[j].mu_z, wm[j].p_ref, wm[j].mu_ref, parts.weights[j], parts.contrasts[j]};
    return d;
  }
  double sw = 0;
  for (size_t j = 1; j < nw; ++j) sw += total.surv_prod[j];
  if (!(sw > 0)) fail(ErrorKind::Runtime, "degenerate survival probability");
  for (size_t j = 1; j < nw; ++j) {
    if (!(total.alive[j] > 0))
      fail(ErrorKind::Runtime, "no pseudo survivors at wave " + std::to_string(j));
    auto& w = d.waves[j];
    w.p_z = w.p_ref = total.surv_prod[j] / n;
    w.mu_z = total.alive_mu_z[j] / total.alive[j];
    w.mu_ref = total.alive_mu_ref[j] / total.alive[j];
    w.contrast = w.mu_z - w.mu_ref;
    w.weight = total.surv_prod[j] / sw;
    d.tau += w.weight * w.contrast;
  }
  return d;
}

uint64_t chain_seed(uint64_t master, int chain) {
  return rng::derive(master, rng::Purpose::Pseudo, {static_cast<uint64_t>(chain)});
}

uint64_t pseudo_key(uint64_t cs, int m) { return rng::derive(cs, rng::Purpose::Pseudo, {static_cast<uint64_t>(m)}); }

SaceResult estimate_from_stack(const PosteriorStack& stack, const SensitivitySource& sens, const GcompOptions& opt) {
  if (opt.n_pseudo < 1 || opt.n_blocks < 1) fail(ErrorKind::InvalidArgument, "pseudo size and blocks must be >= 1");
  if (static_cast<size_t>(opt.n_blocks) > opt.n_pseudo) fail(ErrorKind::InvalidArgument, "more blocks than pseudo-individuals");
  SaceResult res;
  res.n_waves = stack.n_waves();
  res.warnings = stack.warnings();
  res.bounds = sens.bounds;
  int C = stack.n_chains(), M = stack.n_keep();
  for (int c = 0; c < C; ++c) res.chain_seeds.push_back(chain_seed(opt.seed, c));

  auto B = static_cast<size_t>(opt.n_blocks);
  size_t base = opt.n_pseudo / B, extra = opt.n_pseudo % B;
  std::vector<size_t> start(B), len(B);
  for (size_t b = 0, pos = 0; b < B; ++b) {
    len[b] = base + (b < extra ? 1 : 0);
    start[b] = pos;
    pos += len[b];
  }

  size_t n_draws = static_cast<size_t>(C) * static_cast<size_t>(M);
  std::vector<SensitivityDraw> sd(n_draws);
  for (int c = 0; c < C; ++c)
    for (int m = 0; m < M; ++m) {
      auto& s = sd[static_cast<size_t>(c) * static_cast<size_t>(M) + static_cast<size_t>(m)];
      s = sens.draw(res.chain_seeds[static_cast<size_t>(c)], m);
      if (s.n_waves() != stack.n_waves()) fail(ErrorKind::InvalidArgument, "sensitivity draw has wrong wave count");
    }

  std::vector<BlockSums> sums(n_draws * B);
  parallel_for(
      n_draws * B,
      [&](size_t task) {
        size_t di = task / B, b = task % B;
        int c = static_cast<int>(di / static_cast<size_t>(M)), m = static_cast<int>(di % static_cast<size_t>(M));
        auto model = stack.draw(c, m);
        sums[task] = evaluate_block(*model, sd[di], opt, pseudo_key(res.chain_seeds[static_cast<size_t>(c)], m),
                                    start[b], len[b]);
      },
      opt.workers);

  res.draws.reserve(n_draws);
  for (size_t di = 0; di < n_draws; ++di) {
    BlockSums total;
    for (size_t b = 0; b < B; ++b) total.add(sums[di * B + b]);
    DrawResult d;
    try {
      d = assemble_draw(total, sd[di], opt.estimand);
    } catch (const Error& e) {
      fail(e.kind(), "chain " + std::to_string(di / static_cast<size_t>(M)) + " draw " +
                         std::to_string(di % static_cast<size_t>(M)) + ": " + e.what());
    }
    d.chain = static_cast<int>(di / static_cast<size_t>(M));
    d.draw = static_cast<int>(di % static_cast<size_t>(M));
    res.draws.push_back(std::move(d));
  }
  return res;
}

}  // namespace sace::gcomp
