#include "sace/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"

#include "sace/error.hpp"
#include "sace/rng.hpp"

namespace sace::dgp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Observed history with waves < k filled; w_k supplied separately.
struct Hist {
  int x0 = 0;
  std::vector<double> y;
  std::vector<int> z, w;
};

struct Split {
  double d0 = 0, d1 = 0;
  bool clamped = false;
};

class Laws {
 public:
  explicit Laws(const DgpConfig& c) : c_(c) {}

  double ytil(int k, const Hist& h) const {
    return k >= 1 ? (h.y[static_cast<size_t>(k - 1)] - c_.y_center) / c_.y_scale : 0.0;
  }
  double lin(const Mechanism& m, int k, const Hist& h) const {
    auto kk = static_cast<size_t>(k);
    double e = m.intercept[kk] + m.cell[static_cast<size_t>(h.x0)];
    if (k >= 1) e += m.lag_y * ytil(k, h) + m.lag_w * h.w[kk - 1] + m.lag_z * h.z[kk - 1];
    return e;
  }
  double pw(int k, const Hist& h) const { return rng::normal_cdf(lin(c_.w, k, h)); }
  double pz(int k, const Hist& h, int wk) const { return rng::normal_cdf(lin(c_.z, k, h) + c_.z.cur_w * wk); }
  double death(int k, const Hist& h) const { return c_.death ? 1.0 - rng::normal_cdf(lin(c_.s, k, h)) : 0.0; }
  double rho(int k, const Hist& h) const { return c_.dropout ? rng::normal_cdf(lin(c_.r, k, h)) : 1.0; }

  double eta_y(int k, const Hist& h, int zk, int wk) const {
    double e = lin(c_.y, k, h) + c_.y.cur_w * wk + c_.effect[static_cast<size_t>(k)] * zk;
    if (k >= 1 && c_.nonlinear != 0.0) {
      double t = ytil(k, h);
      e += c_.nonlinear * (std::sin(2.5 * t) + 0.75 * (2 * wk - 1) * std::abs(t));
    }
    return e;
  }
  bool discrete() const { return c_.mode == Mode::Discrete; }
  double base(int k, const Hist& h, int zk, int wk, double u) const {
    double e = eta_y(k, h, zk, wk);
    if (discrete()) return u < rng::normal_cdf(e) ? 1.0 : 0.0;
    return e + c_.y_sd * rng::normal_quantile(u);
  }
  double base_mean(int k, const Hist& h, int zk, int wk) const {
    double e = eta_y(k, h, zk, wk);
    return discrete() ? rng::normal_cdf(e) : e;
  }

  // exposure-specific death probabilities with Pr[Z=1|dead] - Pr[Z=1|alive] = nu
  Split split(int k, double D, double p) const {
    Split s{D, D, false};
    double nu = c_.nu[static_cast<size_t>(k)];
    if (D <= 0.0 || D >= 1.0 || p <= 0.0 || p >= 1.0 || nu <= 0.0) return s;
    double cap = std::min(p / D, (1.0 - p) / (1.0 - D));
    if (nu > cap) {
      nu = cap;
      s.clamped = true;
    }
    double t = nu * D * (1.0 - D);
    s.d1 = std::clamp(D + t / p, 0.0, 1.0);
    s.d0 = std::clamp(D - t / (1.0 - p), 0.0, 1.0);
    return s;
  }

  double xi(int k) const { return c_.xi[static_cast<size_t>(k)]; }
  double gamma(int k) const { return c_.gamma[static_cast<size_t>(k)]; }
  double gap(int k) const { return c_.gap[static_cast<size_t>(k)]; }
  const DgpConfig& cfg() const { return c_; }

 private:
  const DgpConfig& c_;
};

Hist empty_hist(int J) {
  Hist h;
  auto n = static_cast<size_t>(J + 1);
  h.y.assign(n, 0.0);
  h.z.assign(n, 0);
  h.w.assign(n, 0);
  return h;
}

// per wave k: slot 3k+1 (w, z), 3k+2 (s, r), 3k+3 (y, unused); slot 0 picks x0
struct Uniforms {
  const rng::CounterStream& st;
  uint64_t i;
  std::array<double, 2> wz(int k) const { return st.uniform2(i, 3 * static_cast<uint64_t>(k) + 1); }
  std::array<double, 2> sr(int k) const { return st.uniform2(i, 3 * static_cast<uint64_t>(k) + 2); }
  double y(int k) const { return st.uniform2(i, 3 * static_cast<uint64_t>(k) + 3)[0]; }
};

void simulate_factual(const Laws& L, const Uniforms& u, int x0, Individual& out, size_t& clamped) {
  const auto& c = L.cfg();
  int J = c.waves;
  Hist h = empty_hist(J);
  h.x0 = x0;
  out.x0 = x0;
  out.waves.assign(static_cast<size_t>(J + 1), WaveRecord{});
  h.w[0] = u.wz(0)[0] < L.pw(0, h) ? 1 : 0;
  h.y[0] = L.base(0, h, 0, h.w[0], u.y(0));
  out.waves[0] = {h.y[0], 0, h.w[0], 1, 1};
  bool alive = true;
  int r = 1;
  for (int k = 1; k <= J; ++k) {
    auto kk = static_cast<size_t>(k);
    auto& rec = out.waves[kk];
    if (!alive) {
      rec = {std::nullopt, std::nullopt, std::nullopt, 0, 0};
      continue;
    }
    auto uwz = u.wz(k), usr = u.sr(k);
    int wk = uwz[0] < L.pw(k, h) ? 1 : 0;
    double D = L.death(k, h);
    int zk = 1;
    bool alive_k, as = false, at_risk = h.z[kk - 1] == 0;
    double U = 0;
    if (!at_risk) {
      alive_k = usr[0] < 1.0 - D;
    } else {
      double p = L.pz(k, h, wk);
      zk = uwz[1] < p ? 1 : 0;
      auto sp = L.split(k, D, p);
      clamped += sp.clamped ? 1 : 0;
      alive_k = usr[0] < 1.0 - (zk == 1 ? sp.d1 : sp.d0);
      as = usr[0] < 1.0 - sp.d1;
      U = L.xi(k) * (p - zk);
    }
    if (!alive_k) {
      alive = false;
      rec = {std::nullopt, std::nullopt, std::nullopt, 0, 0};
      continue;
    }
    int rk = r == 1 && usr[1] < L.rho(k, h) ? 1 : 0;
    double y = L.base(k, h, zk, wk, u.y(k)) + U;
    if (r == 1 && rk == 0) y += L.gamma(k);
    if (at_risk && zk == 0 && as) y += L.gap(k);
    if (rk == 1)
      rec = {y, zk, wk, 1, 1};
    else
      rec = {std::nullopt, std::nullopt, std::nullopt, 0, 1};
    h.y[kk] = y;
    h.z[kk] = zk;
    h.w[kk] = wk;
    r = rk;
  }
}

void simulate_never(const Laws& L, const Uniforms& u, int x0, LatentRecord& rec) {
  const auto& c = L.cfg();
  int J = c.waves;
  auto n = static_cast<size_t>(J + 1);
  rec.as.assign(n, 0);
  rec.protected_.assign(n, 0);
  rec.alive_ref.assign(n, 0);
  rec.y_exp.assign(n, kNaN);
  rec.y_ref.assign(n, kNaN);
  Hist h = empty_hist(J);
  h.x0 = x0;
  h.w[0] = u.wz(0)[0] < L.pw(0, h) ? 1 : 0;
  h.y[0] = L.base(0, h, 0, h.w[0], u.y(0));
  rec.alive_ref[0] = 1;
  int r = 1;
  for (int k = 1; k <= J; ++k) {
    auto kk = static_cast<size_t>(k);
    if (rec.alive_ref[kk - 1] == 0) continue;
    auto uwz = u.wz(k), usr = u.sr(k);
    int wk = uwz[0] < L.pw(k, h) ? 1 : 0;
    double p = L.pz(k, h, wk);
    int znat = uwz[1] < p ? 1 : 0;
    auto sp = L.split(k, L.death(k, h), p);
    bool as = usr[0] < 1.0 - sp.d1, alive = usr[0] < 1.0 - sp.d0;
    int rk = r == 1 && usr[1] < L.rho(k, h) ? 1 : 0;
    double shift = L.xi(k) * (p - znat) + (r == 1 && rk == 0 ? L.gamma(k) : 0.0);
    double uy = u.y(k);
    rec.as[kk] = as ? 1 : 0;
    rec.protected_[kk] = alive && !as ? 1 : 0;
    rec.alive_ref[kk] = alive ? 1 : 0;
    if (as) rec.y_exp[kk] = L.base(k, h, 1, wk, uy) + shift;
    if (!alive) continue;
    double y0 = L.base(k, h, 0, wk, uy) + shift + (as ? L.gap(k) : 0.0);
    rec.y_ref[kk] = y0;
    h.y[kk] = y0;
    h.w[kk] = wk;
    r = rk;
  }
}

int draw_cell(const DgpConfig& c, const rng::CounterStream& st, uint64_t i) {
  return rng::categorical(c.baseline, st.uniform2(i, 0)[0]);
}

std::vector<double> parse_vec(const std::string& key, const std::string& v, size_t n) {
  auto xs = parse_double_list(v, key);
  if (xs.size() == 1 && n > 1) xs.assign(n, xs[0]);
  if (xs.size() != n)
    fail(ErrorKind::Validation, "dgp key '" + key + "' needs " + std::to_string(n) + " values, got " +
                                    std::to_string(xs.size()));
  return xs;
}

void check_len(const std::string& name, const std::vector<double>& v, size_t n) {
  if (v.size() != n)
    fail(ErrorKind::Validation, "dgp " + name + " needs " + std::to_string(n) + " values, got " + std::to_string(v.size()));
  for (double x : v)
    if (!std::isfinite(x)) fail(ErrorKind::Validation, "dgp " + name + " has a non-finite value");
}

}  // namespace

void DgpConfig::validate() const {
  if (waves < 1) fail(ErrorKind::Validation, "dgp needs waves >= 1");
  if (baseline.empty()) fail(ErrorKind::Validation, "dgp needs baseline cell probabilities");
  double sum = 0;
  for (double p : baseline) {
    if (!(p >= 0)) fail(ErrorKind::Validation, "dgp baseline probabilities must be >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::Validation, "dgp baseline probabilities must sum to 1");
  auto nw = static_cast<size_t>(waves + 1), L = baseline.size();
  for (auto [name, m] : {std::pair{"w", &w}, {"z", &z}, {"s", &s}, {"r", &r}, {"y", &y}}) {
    check_len(std::string(name) + ".intercept", m->intercept, nw);
    check_len(std::string(name) + ".cell", m->cell, L);
  }
  check_len("effect", effect, nw);
  check_len("gamma", gamma, nw);
  check_len("gap", gap, nw);
  check_len("xi", xi, nw);
  check_len("nu", nu, nw);
  for (size_t k = 1; k < nw; ++k) {
    if (nu[k] < 0) fail(ErrorKind::Validation, "dgp nu must be >= 0 (monotone survival construction)");
    if (nu[k] > 1) fail(ErrorKind::Validation, "dgp nu must be <= 1");
    if (gamma[k] > 0) fail(ErrorKind::Validation, "dgp gamma must be <= 0");
    if (gap[k] < 0) fail(ErrorKind::Validation, "dgp gap must be >= 0");
    if (xi[k] < 0) fail(ErrorKind::Validation, "dgp xi must be >= 0");
  }
  if (mode == Mode::Continuous && !(y_sd > 0)) fail(ErrorKind::Validation, "dgp y.sd must be > 0");
  if (!(y_scale > 0)) fail(ErrorKind::Validation, "dgp y.scale must be > 0");
}

std::string DgpConfig::to_text() const {
  std::ostringstream o;
  o << "mode=" << (mode == Mode::Discrete ? "discrete" : "continuous") << "\n";
  o << "waves=" << waves << "\n";
  o << "baseline=" << join_doubles(baseline) << "\n";
  for (auto [name, m] : {std::pair{"w", &w}, {"z", &z}, {"s", &s}, {"r", &r}, {"y", &y}}) {
    std::string n(name);
    o << n << ".intercept=" << join_doubles(m->intercept) << "\n";
    o << n << ".cell=" << join_doubles(m->cell) << "\n";
    o << n << ".lag_y=" << fmt_double(m->lag_y) << "\n";
    o << n << ".lag_w=" << fmt_double(m->lag_w) << "\n";
    o << n << ".lag_z=" << fmt_double(m->lag_z) << "\n";
    o << n << ".cur_w=" << fmt_double(m->cur_w) << "\n";
  }
  o << "death=" << (death ? 1 : 0) << "\n";
  o << "dropout=" << (dropout ? 1 : 0) << "\n";
  o << "effect=" << join_doubles(effect) << "\n";
  o << "y.sd=" << fmt_double(y_sd) << "\n";
  o << "y.center=" << fmt_double(y_center) << "\n";
  o << "y.scale=" << fmt_double(y_scale) << "\n";
  o << "nonlinear=" << fmt_double(nonlinear) << "\n";
  o << "gamma=" << join_doubles(gamma) << "\n";
  o << "gap=" << join_doubles(gap) << "\n";
  o << "xi=" << join_doubles(xi) << "\n";
  o << "nu=" << join_doubles(nu) << "\n";
  return o.str();
}

DgpConfig DgpConfig::parse(std::string_view text) {
  std::map<std::string, std::string> kv;
  int lineno = 0;
  for (auto& raw : split(text, '\n')) {
    ++lineno;
    auto line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Parse, "dgp config line " + std::to_string(lineno) + ": expected key=value");
    kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  auto take = [&](const std::string& k) -> std::optional<std::string> {
    auto it = kv.find(k);
    if (it == kv.end()) return std::nullopt;
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  DgpConfig c;
  if (auto v = take("mode")) {
    if (*v == "discrete")
      c.mode = Mode::Discrete;
    else if (*v == "continuous")
      c.mode = Mode::Continuous;
    else
      fail(ErrorKind::Parse, "dgp mode must be continuous|discrete");
  }
  if (auto v = take("waves")) c.waves = static_cast<int>(parse_int(*v, "waves"));
  if (c.waves < 1) fail(ErrorKind::Validation, "dgp needs waves >= 1");
  auto nw = static_cast<size_t>(c.waves + 1);
  if (auto v = take("baseline"))
    c.baseline = parse_double_list(*v, "baseline");
  else
    c.baseline = {1.0};
  size_t L = c.baseline.size();
  for (auto [name, m] : {std::pair{"w", &c.w}, {"z", &c.z}, {"s", &c.s}, {"r", &c.r}, {"y", &c.y}}) {
    std::string n(name);
    m->intercept = parse_vec(n + ".intercept", take(n + ".intercept").value_or("0"), nw);
    m->cell = parse_vec(n + ".cell", take(n + ".cell").value_or("0"), L);
    for (auto [f, dst] : {std::pair{"lag_y", &m->lag_y}, {"lag_w", &m->lag_w}, {"lag_z", &m->lag_z}, {"cur_w", &m->cur_w}})
      if (auto v = take(n + "." + f)) *dst = parse_double(*v, n + "." + f);
  }
  if (auto v = take("death")) c.death = parse_int(*v, "death") != 0;
  if (auto v = take("dropout")) c.dropout = parse_int(*v, "dropout") != 0;
  c.effect = parse_vec("effect", take("effect").value_or("0"), nw);
  if (auto v = take("y.sd")) c.y_sd = parse_double(*v, "y.sd");
  if (auto v = take("y.center")) c.y_center = parse_double(*v, "y.center");
  if (auto v = take("y.scale")) c.y_scale = parse_double(*v, "y.scale");
  if (auto v = take("nonlinear")) c.nonlinear = parse_double(*v, "nonlinear");
  for (auto [name, dst] : {std::pair{"gamma", &c.gamma}, {"gap", &c.gap}, {"xi", &c.xi}, {"nu", &c.nu}}) {
    *dst = parse_vec(name, take(name).value_or("0"), nw);
    (*dst)[0] = 0.0;
  }
  if (!kv.empty()) fail(ErrorKind::Parse, "unknown dgp key '" + kv.begin()->first + "'");
  c.validate();
  return c;
}

namespace {

Mechanism mech(std::vector<double> intercept, std::vector<double> cell, double lag_y, double lag_w, double lag_z,
               double cur_w) {
  Mechanism m;
  m.intercept = std::move(intercept);
  m.cell = std::move(cell);
  m.lag_y = lag_y;
  m.lag_w = lag_w;
  m.lag_z = lag_z;
  m.cur_w = cur_w;
  return m;
}

DgpConfig discrete_base(int J) {
  DgpConfig c;
  c.mode = Mode::Discrete;
  c.waves = J;
  c.baseline = {0.45, 0.55};
  auto nw = static_cast<size_t>(J + 1);
  auto vec = [&](std::initializer_list<double> v) {
    std::vector<double> out(v);
    out.resize(nw, out.back());
    return out;
  };
  c.w = mech(vec({0.1, -0.2, 0.1, 0.0}), {0.0, 0.4}, 0.5, 0.6, 0.3, 0.0);
  c.z = mech(vec({0.0, -0.6, -0.4, -0.5}), {0.0, 0.3}, 0.4, 0.5, 0.0, 0.4);
  c.s = mech(vec({0.0, 1.0, 0.8, 0.9}), {0.0, -0.3}, 0.4, -0.2, -0.3, 0.0);
  c.r = mech(vec({0.0, 0.9, 1.1, 1.0}), {0.0, 0.2}, 0.5, -0.3, 0.2, 0.0);
  c.y = mech(vec({-0.3, -0.1, 0.1, 0.0}), {0.0, 0.5}, 0.8, 0.3, 0.0, 0.4);
  c.effect = vec({0.0, 0.7, 0.6, 0.5});
  c.y_center = 0.5;
  c.y_scale = 0.5;
  c.gamma = vec({0.0, -0.3, -0.25, -0.2});
  c.gap = std::vector<double>(nw, 0.0);
  c.xi = std::vector<double>(nw, 0.0);
  c.nu = std::vector<double>(nw, 0.0);
  return c;
}

DgpConfig continuous_base(int J, int L) {
  DgpConfig c;
  c.mode = Mode::Continuous;
  c.waves = J;
  c.baseline.assign(static_cast<size_t>(L), 1.0 / L);
  auto nw = static_cast<size_t>(J + 1);
  auto cells = [&](double step) {
    std::vector<double> v(static_cast<size_t>(L));
    for (int l = 0; l < L; ++l) v[static_cast<size_t>(l)] = step * (l - (L - 1) / 2.0);
    return v;
  };
  auto vec = [&](std::initializer_list<double> v) {
    std::vector<double> out(v);
    out.resize(nw, out.back());
    return out;
  };
  c.w = mech(vec({0.0, -0.1, 0.0}), cells(0.2), 0.4, 0.8, 0.2, 0.0);
  c.z = mech(vec({0.0, -0.7, -0.5}), cells(0.15), 0.3, 0.4, 0.0, 0.3);
  c.s = mech(vec({0.0, 1.5, 1.4}), cells(-0.1), 0.3, -0.2, -0.2, 0.0);
  c.r = mech(vec({0.0, 1.3, 1.3}), cells(0.1), 0.3, -0.2, 0.0, 0.0);
  c.y = mech(vec({0.0, 0.3, 0.2}), cells(0.5), 0.6, 0.4, 0.0, 0.5);
  c.effect = vec({0.0, 0.8, 0.6});
  c.y_sd = 1.0;
  c.y_center = 0.0;
  c.y_scale = 1.5;
  c.gamma = vec({0.0, -0.4, -0.4});
  c.gap = vec({0.0, 0.3, 0.3});
  c.xi = std::vector<double>(nw, 0.0);
  c.nu = std::vector<double>(nw, 0.0);
  return c;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"toy",        "null",         "linear",      "recovery",   "nonlinear",    "exact_plain", "exact_death",
          "exact_j1_xi", "exact_j2_xi", "exact_j3_dropout", "exact_full", "stress_nu"};
}

DgpConfig preset(std::string_view name) {
  DgpConfig c;
  if (name == "toy") {
    c = discrete_base(2);
  } else if (name == "null") {
    c = continuous_base(2, 2);
    c.death = c.dropout = false;
    std::fill(c.effect.begin(), c.effect.end(), 0.0);
    std::fill(c.gamma.begin(), c.gamma.end(), 0.0);
    std::fill(c.gap.begin(), c.gap.end(), 0.0);
  } else if (name == "linear") {
    // no death, no dropout, no sensitivity structure
    c = continuous_base(2, 3);
    c.death = c.dropout = false;
    std::fill(c.gamma.begin(), c.gamma.end(), 0.0);
    std::fill(c.gap.begin(), c.gap.end(), 0.0);
  } else if (name == "recovery") {
    c = continuous_base(2, 4);
  } else if (name == "nonlinear") {
    c = continuous_base(2, 4);
    c.nonlinear = 1.5;
    c.y_sd = 0.5;
    c.y.lag_y = 0.2;
  } else if (name == "exact_plain") {
    c = discrete_base(2);
    c.death = c.dropout = false;
    std::fill(c.gamma.begin(), c.gamma.end(), 0.0);
  } else if (name == "exact_death") {
    c = discrete_base(2);
    c.dropout = false;
    std::fill(c.gamma.begin(), c.gamma.end(), 0.0);
  } else if (name == "exact_j1_xi") {
    c = discrete_base(1);
    c.xi = {0.0, 0.4};
  } else if (name == "exact_j2_xi") {
    // xi only at the last wave, so no intermediate lag sees the confounder
    c = discrete_base(2);
    c.xi = {0.0, 0.0, 0.35};
  } else if (name == "exact_j3_dropout") {
    c = discrete_base(3);
    c.death = false;
  } else if (name == "exact_full") {
    // xi at every wave with no lagged-outcome dependence
    c = discrete_base(3);
    for (auto* m : {&c.w, &c.z, &c.s, &c.r, &c.y}) m->lag_y = 0.0;
    c.xi = {0.0, 0.3, 0.25, 0.2};
  } else if (name == "stress_nu") {
    c = discrete_base(2);
    c.nu = {0.0, 0.15, 0.15};
  } else {
    fail(ErrorKind::InvalidArgument, "unknown dgp preset '" + std::string(name) + "'");
  }
  c.validate();
  return c;
}

Simulated generate_cohort(const DgpConfig& cfg, size_t n, uint64_t seed) {
  cfg.validate();
  if (n < 1) fail(ErrorKind::InvalidArgument, "cohort size must be >= 1");
  Laws L(cfg);
  rng::CounterStream st(rng::derive(seed, rng::Purpose::Dgp, {0}));
  Simulated out;
  auto& d = out.data;
  d.n_waves = cfg.waves + 1;
  d.n_cells = cfg.n_cells();
  for (int l = 0; l < d.n_cells; ++l) d.cell_labels.push_back("c" + std::to_string(l));
  d.people.resize(n);
  out.truth.people.resize(n);
  for (size_t i = 0; i < n; ++i) {
    Uniforms u{st, i};
    int x0 = draw_cell(cfg, st, i);
    auto& p = d.people[i];
    p.id = "p" + std::to_string(i + 1);
    simulate_factual(L, u, x0, p, out.truth.nu_clamped);
    simulate_never(L, u, x0, out.truth.people[i]);
  }
  return out;
}

OracleValue oracle_sace(const DgpConfig& cfg, size_t M, uint64_t seed) {
  cfg.validate();
  if (M < 2) fail(ErrorKind::InvalidArgument, "oracle needs M >= 2");
  Laws L(cfg);
  rng::CounterStream st(rng::derive(seed, rng::Purpose::Oracle, {0}));
  int J = cfg.waves;
  auto nw = static_cast<size_t>(J + 1);
  std::vector<double> a(M), b(M);
  std::vector<double> n_as(nw, 0), n_pr(nw, 0), diff(nw, 0), y0_as(nw, 0), y0_pr(nw, 0);
  LatentRecord rec;
  for (size_t i = 0; i < M; ++i) {
    Uniforms u{st, i};
    simulate_never(L, u, draw_cell(cfg, st, i), rec);
    for (size_t j = 1; j < nw; ++j) {
      if (rec.as[j]) {
        double dlt = rec.y_exp[j] - rec.y_ref[j];
        a[i] += dlt;
        b[i] += 1.0;
        n_as[j] += 1;
        diff[j] += dlt;
        y0_as[j] += rec.y_ref[j];
      } else if (rec.protected_[j]) {
        n_pr[j] += 1;
        y0_pr[j] += rec.y_ref[j];
      }
    }
  }
  OracleValue o;
  o.p_as.assign(nw, 0);
  o.p_protected.assign(nw, 0);
  o.contrast.assign(nw, 0);
  o.delta.assign(nw, 0);
  auto Md = static_cast<double>(M);
  for (size_t j = 1; j < nw; ++j) {
    if (n_as[j] == 0) fail(ErrorKind::Runtime, "empty stratum at wave " + std::to_string(j));
    o.p_as[j] = n_as[j] / Md;
    o.p_protected[j] = n_pr[j] / Md;
    o.contrast[j] = diff[j] / n_as[j];
    o.delta[j] = n_pr[j] > 0 ? y0_as[j] / n_as[j] - y0_pr[j] / n_pr[j] : cfg.gap[j];
  }
  double A = 0, B = 0;
  for (size_t i = 0; i < M; ++i) {
    A += a[i];
    B += b[i];
  }
  o.tau = A / B;
  double mean = 0;
  std::vector<double> loo(M);
  for (size_t i = 0; i < M; ++i) {
    loo[i] = (A - a[i]) / (B - b[i]);
    mean += loo[i];
  }
  mean /= Md;
  double ss = 0;
  for (double v : loo) ss += (v - mean) * (v - mean);
  o.se = std::sqrt((Md - 1.0) / Md * ss);
  return o;
}

namespace {

struct Cap {
  size_t cells = 0, limit;
  void tick() {
    if (++cells > limit) fail(ErrorKind::Runtime, "enumeration support exceeds cell cap " + std::to_string(limit));
  }
};

void require_discrete(const DgpConfig& cfg) {
  cfg.validate();
  if (cfg.mode != Mode::Discrete) fail(ErrorKind::InvalidArgument, "exact enumeration requires discrete mode");
}

}  // namespace

OracleValue oracle_sace_exact(const DgpConfig& cfg, size_t cell_cap) {
  require_discrete(cfg);
  Laws L(cfg);
  int J = cfg.waves;
  auto nw = static_cast<size_t>(J + 1);
  std::vector<double> p_as(nw, 0), p_pr(nw, 0), diff(nw, 0), y0_as(nw, 0), y0_pr(nw, 0);
  Cap cap{0, cell_cap};
  size_t clamped = 0;

  std::function<void(int, Hist&, int, double)> rec = [&](int k, Hist& h, int r, double wt) {
    auto kk = static_cast<size_t>(k);
    double D = L.death(k, h), rho = L.rho(k, h), pw = L.pw(k, h);
    for (int wk = 0; wk <= 1; ++wk) {
      double ww = wt * (wk ? pw : 1.0 - pw);
      if (ww == 0) continue;
      double p = L.pz(k, h, wk);
      auto sp = L.split(k, D, p);
      clamped += sp.clamped ? 1 : 0;
      bool branch_z = L.xi(k) != 0.0;
      for (int zn = 0; zn <= (branch_z ? 1 : 0); ++zn) {
        double wz = branch_z ? ww * (zn ? p : 1.0 - p) : ww;
        if (wz == 0) continue;
        double U = branch_z ? L.xi(k) * (p - zn) : 0.0;
        for (int rk = 0; rk <= 1; ++rk) {
          double pr = r == 1 ? (rk ? rho : 1.0 - rho) : (rk ? 0.0 : 1.0);
          double wr = wz * pr;
          if (wr == 0) continue;
          cap.tick();
          double shift = U + (r == 1 && rk == 0 ? L.gamma(k) : 0.0);
          double m1 = L.base_mean(k, h, 1, wk) + shift, m0 = L.base_mean(k, h, 0, wk) + shift;
          double was = wr * (1.0 - sp.d1), wpr = wr * (sp.d1 - sp.d0);
          p_as[kk] += was;
          diff[kk] += was * (m1 - m0 - L.gap(k));
          y0_as[kk] += was * (m0 + L.gap(k));
          p_pr[kk] += wpr;
          y0_pr[kk] += wpr * m0;
          if (k == J) continue;
          double q1 = rng::normal_cdf(L.eta_y(k, h, 0, wk));
          for (int stratum = 0; stratum <= 1; ++stratum) {
            double ws = stratum == 0 ? was : wpr;
            if (ws <= 0) continue;
            for (int yb = 0; yb <= 1; ++yb) {
              double wy = ws * (yb ? q1 : 1.0 - q1);
              if (wy == 0) continue;
              h.y[kk] = yb + shift + (stratum == 0 ? L.gap(k) : 0.0);
              h.z[kk] = 0;
              h.w[kk] = wk;
              rec(k + 1, h, rk, wy);
            }
          }
        }
      }
    }
  };

  for (int x0 = 0; x0 < cfg.n_cells(); ++x0) {
    double px = cfg.baseline[static_cast<size_t>(x0)];
    if (px == 0) continue;
    Hist h = empty_hist(J);
    h.x0 = x0;
    double pw = L.pw(0, h);
    for (int w0 = 0; w0 <= 1; ++w0) {
      double ww = px * (w0 ? pw : 1.0 - pw);
      if (ww == 0) continue;
      h.w[0] = w0;
      double q = rng::normal_cdf(L.eta_y(0, h, 0, w0));
      for (int yb = 0; yb <= 1; ++yb) {
        double wy = ww * (yb ? q : 1.0 - q);
        if (wy == 0) continue;
        h.y[0] = yb;
        rec(1, h, 1, wy);
      }
    }
  }

  OracleValue o;
  o.p_as = p_as;
  o.p_protected = p_pr;
  o.contrast.assign(nw, 0);
  o.delta.assign(nw, 0);
  o.nu_clamped = clamped;
  double num = 0, den = 0;
  for (size_t j = 1; j < nw; ++j) {
    if (!(p_as[j] > 0)) fail(ErrorKind::Runtime, "empty stratum at wave " + std::to_string(j));
    o.contrast[j] = diff[j] / p_as[j];
    o.delta[j] = p_pr[j] > 0 ? y0_as[j] / p_as[j] - y0_pr[j] / p_pr[j] : cfg.gap[j];
    num += diff[j];
    den += p_as[j];
  }
  o.tau = num / den;
  return o;
}

namespace {

// True observed-data laws for an at-risk history (z̄_{k-1} = 0).
struct ObsLaw {
  const Laws& L;

  // survival probability given exposure draw w: Pr[alive | H, w]
  double alive_given_w(int k, const Hist& h, int wk) const {
    double p = L.pz(k, h, wk);
    auto sp = L.split(k, L.death(k, h), p);
    return p * (1.0 - sp.d1) + (1.0 - p) * (1.0 - sp.d0);
  }
  double pi_s(int k, const Hist& h) const {
    double pw = L.pw(k, h);
    return pw * alive_given_w(k, h, 1) + (1.0 - pw) * alive_given_w(k, h, 0);
  }
  double pi_w(int k, const Hist& h) const {
    double pw = L.pw(k, h);
    if (k == 0) return pw;
    double a1 = pw * alive_given_w(k, h, 1), a0 = (1.0 - pw) * alive_given_w(k, h, 0);
    return a1 + a0 > 0 ? a1 / (a1 + a0) : pw;
  }
  double pi_z(int k, const Hist& h, int wk) const {
    double p = L.pz(k, h, wk);
    auto sp = L.split(k, L.death(k, h), p);
    double a1 = p * (1.0 - sp.d1), a0 = (1.0 - p) * (1.0 - sp.d0);
    return a1 + a0 > 0 ? a1 / (a1 + a0) : p;
  }
  double p_as_given_alive0(int k, const Hist& h, int wk) const {
    double p = L.pz(k, h, wk);
    auto sp = L.split(k, L.death(k, h), p);
    return sp.d0 < 1.0 ? (1.0 - sp.d1) / (1.0 - sp.d0) : 0.0;
  }
  // outcome support among retained survivors: (value, probability) pairs
  std::vector<std::pair<double, double>> y_law(int k, const Hist& h, int zk, int wk) const {
    std::vector<std::pair<double, double>> out;
    double q = L.discrete() ? rng::normal_cdf(L.eta_y(k, h, zk, wk)) : 0.0;
    if (k == 0) {
      out = {{0.0, 1.0 - q}, {1.0, q}};
      return out;
    }
    double p = L.pz(k, h, wk);
    if (zk == 1) {
      double U = L.xi(k) * (p - 1.0);
      out = {{U, 1.0 - q}, {1.0 + U, q}};
      return out;
    }
    double U = L.xi(k) * p, a = p_as_given_alive0(k, h, wk), G = L.gap(k);
    if (G == 0.0 || a == 0.0) {
      out = {{U, 1.0 - q}, {1.0 + U, q}};
    } else if (a == 1.0) {
      out = {{U + G, 1.0 - q}, {1.0 + U + G, q}};
    } else {
      out = {{U, (1.0 - q) * (1 - a)}, {1.0 + U, q * (1 - a)}, {U + G, (1.0 - q) * a}, {1.0 + U + G, q * a}};
    }
    return out;
  }
  double mu(int k, const Hist& h, int zk, int wk) const {
    double m0 = L.base_mean(k, h, zk, wk);
    if (k == 0) return m0;
    double p = L.pz(k, h, wk);
    if (zk == 1) return m0 + L.xi(k) * (p - 1.0);
    return m0 + L.xi(k) * p + L.gap(k) * p_as_given_alive0(k, h, wk);
  }
};

}  // namespace

IdentifiedValue oracle_identified(const DgpConfig& cfg, gcomp::GammaMode mode, size_t cell_cap) {
  require_discrete(cfg);
  Laws L(cfg);
  ObsLaw law{L};
  int J = cfg.waves;
  auto nw = static_cast<size_t>(J + 1);
  IdentifiedValue out;
  out.fp.assign(nw, {});
  out.a3.assign(nw, {});
  Cap cap{0, cell_cap};
  using gcomp::ChiVariant;

  std::function<void(int, Hist&, int, double, double, double)> rec = [&](int k, Hist& h, int r_prev, double wt,
                                                                        double chi_fp, double chi_a3) {
    auto kk = static_cast<size_t>(k);
    double ps = law.pi_s(k, h), pr = r_prev == 1 ? L.rho(k, h) : 0.0, pw = law.pi_w(k, h);
    double A = gcomp::survival_given_dropout(pr, ps);
    for (int rk = 0; rk <= 1; ++rk) {
      double prob_r = r_prev == 1 ? (rk ? ps * pr : 1.0 - ps * pr) : (rk ? 0.0 : 1.0);
      if (prob_r == 0) continue;
      for (int wk = 0; wk <= 1; ++wk) {
        double wgt = wt * prob_r * (wk ? pw : 1.0 - pw);
        if (wgt == 0) continue;
        cap.tick();
        double pz1 = law.pi_z(k, h, wk);
        double nu = cfg.nu[kk];
        double f[2][2] = {{1, 1}, {1, 1}};  // [variant][z]
        if (rk == 0)
          for (int z = 0; z <= 1; ++z) {
            double pi_reg = z ? pz1 : 1.0 - pz1, nr = gcomp::regime_nu(nu, pz1, z);
            f[0][z] = gcomp::dropout_factor(ChiVariant::FirstPrinciples, pi_reg, A, nr);
            f[1][z] = gcomp::dropout_factor(ChiVariant::A3, pi_reg, A, nr);
          }
        double shift = gcomp::gamma_applies(mode, r_prev, rk) ? cfg.gamma[kk] : 0.0;
        double phi_z = gcomp::phi_value(law.mu(k, h, 1, wk), shift, -cfg.xi[kk], pz1);
        double phi_ref = gcomp::phi_value(law.mu(k, h, 0, wk), shift, cfg.xi[kk], 1.0 - pz1);
        double cf[2] = {chi_fp, chi_a3};
        std::vector<gcomp::WaveMoments>* dst[2] = {&out.fp, &out.a3};
        for (int v = 0; v < 2; ++v) {
          auto& m = (*dst[v])[kk];
          double cz = cf[v] * f[v][1], cr = cf[v] * f[v][0];
          m.p_z += wgt * cz;
          m.mu_z += wgt * cz * phi_z;
          m.p_ref += wgt * cr;
          m.mu_ref += wgt * cr * phi_ref;
        }
        if (k == J) continue;
        for (auto [yv, py] : law.y_law(k, h, 0, wk)) {
          if (py == 0) continue;
          h.y[kk] = yv + shift;
          h.z[kk] = 0;
          h.w[kk] = wk;
          rec(k + 1, h, rk, wgt * py, cf[0] * f[0][0], cf[1] * f[1][0]);
        }
      }
    }
  };

  for (int x0 = 0; x0 < cfg.n_cells(); ++x0) {
    double px = cfg.baseline[static_cast<size_t>(x0)];
    if (px == 0) continue;
    Hist h = empty_hist(J);
    h.x0 = x0;
    double pw = law.pi_w(0, h);
    for (int w0 = 0; w0 <= 1; ++w0) {
      double ww = px * (w0 ? pw : 1.0 - pw);
      if (ww == 0) continue;
      h.w[0] = w0;
      for (auto [yv, py] : law.y_law(0, h, 0, w0)) {
        if (py == 0) continue;
        h.y[0] = yv;
        rec(1, h, 1, ww * py, 1.0, 1.0);
      }
    }
  }
  out.cells = cap.cells;

  auto truth = oracle_sace_exact(cfg, cell_cap);
  out.tau_fp = gcomp::tau_draw(out.fp, truth.delta).tau;
  out.tau_a3 = gcomp::tau_draw(out.a3, truth.delta).tau;
  return out;
}

namespace {

// Split an encoded feature vector back into a history.
Hist decode(const FeatureLayout& l, const double* x, int J) {
  Hist h = empty_hist(J);
  const double* p = x;
  for (int k = 0; k < l.n_y; ++k) h.y[static_cast<size_t>(k)] = *p++;
  for (int k = 0; k < l.n_z; ++k) h.z[static_cast<size_t>(k)] = *p++ > 0.5 ? 1 : 0;
  for (int k = 0; k < l.n_w; ++k) h.w[static_cast<size_t>(k)] = *p++ > 0.5 ? 1 : 0;
  h.x0 = 0;
  for (int c = 0; c < l.n_cells; ++c)
    if (p[c] > 0.5) h.x0 = c;
  return h;
}

}  // namespace

TrueLawModel::TrueLawModel(DgpConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

double TrueLawModel::mean_y(int wave, const double* x) const {
  Laws L(cfg_);
  ObsLaw law{L};
  auto h = decode(layout_for(Factor::Y, wave, cfg_.n_cells()), x, cfg_.waves);
  auto kk = static_cast<size_t>(wave);
  if (wave >= 1 && h.z[kk - 1] == 1) return L.base_mean(wave, h, 1, h.w[kk]);
  return law.mu(wave, h, h.z[kk], h.w[kk]);
}

double TrueLawModel::sd_y(int) const { return cfg_.mode == Mode::Continuous ? cfg_.y_sd : 0.5; }

double TrueLawModel::prob(Factor f, int wave, const double* x) const {
  Laws L(cfg_);
  ObsLaw law{L};
  auto h = decode(layout_for(f, wave, cfg_.n_cells()), x, cfg_.waves);
  auto kk = static_cast<size_t>(wave);
  bool exposed = wave >= 1 && h.z[kk - 1] == 1;
  switch (f) {
    case Factor::W:
      if (exposed) return L.pw(wave, h);
      return law.pi_w(wave, h);
    case Factor::Z:
      return exposed ? 1.0 : law.pi_z(wave, h, h.w[kk]);
    case Factor::S:
      return exposed ? 1.0 - L.death(wave, h) : law.pi_s(wave, h);
    case Factor::R:
      return L.rho(wave, h);
    default:
      fail(ErrorKind::InvalidArgument, "not a binary factor");
  }
}

double TrueLawModel::potential_mean(int wave, const double* x_y, int z) const {
  Laws L(cfg_);
  ObsLaw law{L};
  auto h = decode(layout_for(Factor::Y, wave, cfg_.n_cells()), x_y, cfg_.waves);
  auto kk = static_cast<size_t>(wave);
  double m = L.base_mean(wave, h, z, h.w[kk]);
  if (z == 0) m += L.gap(wave) * law.p_as_given_alive0(wave, h, h.w[kk]);
  return m;
}

std::string truth_json(const DgpConfig& cfg, const Simulated& sim, const OracleValue& oracle) {
  nlohmann::ordered_json j;
  j["tau_true"] = oracle.tau;
  j["tau_true_se"] = oracle.se;
  int J = cfg.waves;
  // sample-level principal-stratum contrast of the generated cohort
  double num = 0, den = 0;
  std::vector<double> as(static_cast<size_t>(J + 1), 0), pr(static_cast<size_t>(J + 1), 0);
  for (const auto& r : sim.truth.people)
    for (int k = 1; k <= J; ++k) {
      auto kk = static_cast<size_t>(k);
      if (r.as[kk]) {
        num += r.y_exp[kk] - r.y_ref[kk];
        den += 1;
        as[kk] += 1;
      }
      if (r.protected_[kk]) pr[kk] += 1;
    }
  j["tau_sample"] = den > 0 ? num / den : 0.0;
  auto n = static_cast<double>(std::max<size_t>(1, sim.truth.people.size()));
  auto waves = nlohmann::ordered_json::array();
  for (int k = 1; k <= J; ++k) {
    auto kk = static_cast<size_t>(k);
    nlohmann::ordered_json w;
    w["wave"] = k;
    w["p_always_survivor"] = oracle.p_as[kk];
    w["p_protected"] = oracle.p_protected[kk];
    w["p_dead_both"] = 1.0 - oracle.p_as[kk] - oracle.p_protected[kk];
    w["sample_p_always_survivor"] = as[kk] / n;
    w["sample_p_protected"] = pr[kk] / n;
    w["contrast"] = oracle.contrast[kk];
    w["xi"] = cfg.xi[kk];
    w["gamma"] = cfg.gamma[kk];
    w["gap"] = cfg.gap[kk];
    w["delta"] = oracle.delta[kk];
    w["nu"] = cfg.nu[kk];
    waves.push_back(w);
  }
  j["waves"] = waves;
  j["nu_clamped"] = sim.truth.nu_clamped;
  j["dgp"] = cfg.to_text();
  return j.dump(2) + "\n";
}

}  // namespace sace::dgp
