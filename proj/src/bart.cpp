#include "sace/bart.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "sace/error.hpp"
#include "sace/rng.hpp"

namespace sace::bart {

void BartConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::InvalidArgument, "bart config: " + m); };
  if (n_trees < 1) bad("n_trees must be >= 1");
  if (!(alpha > 0 && alpha < 1)) bad("alpha must be in (0,1)");
  if (!(beta >= 0)) bad("beta must be >= 0");
  if (!(k > 0)) bad("k must be > 0");
  if (!(nu > 0)) bad("nu must be > 0");
  if (!(q > 0 && q < 1)) bad("q must be in (0,1)");
  if (n_burn < 0 || n_keep < 1 || thin < 1) bad("schedule needs burn >= 0, keep >= 1, thin >= 1");
  if (p_grow < 0 || p_prune < 0 || p_change < 0 || p_grow + p_prune + p_change <= 0) bad("bad move probabilities");
}

double split_prior_prob(int depth, double alpha, double beta) {
  return alpha * std::pow(1.0 + depth, -beta);
}

int Tree::n_leaves() const {
  int c = 0;
  for (const auto& n : nodes) c += n.feature < 0;
  return c;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].feature < 0) continue;
    d[static_cast<size_t>(nodes[i].left)] = d[i] + 1;
    d[static_cast<size_t>(nodes[i].right)] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

double ForestDraw::prob_unchecked(const double* x) const {
  double p = rng::normal_cdf(offset + tree_sum(x));
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

double predict_mean(const ForestDraw& draw, std::span<const double> x) {
  if (static_cast<int>(x.size()) != draw.n_features)
    fail(ErrorKind::InvalidArgument, "feature arity mismatch: got " + std::to_string(x.size()) + ", forest expects " +
                                         std::to_string(draw.n_features));
  if (draw.link == Link::Probit) return draw.offset + draw.tree_sum(x.data());
  return draw.mean_unchecked(x.data());
}

double predict_prob(const ForestDraw& draw, std::span<const double> x) {
  if (static_cast<int>(x.size()) != draw.n_features)
    fail(ErrorKind::InvalidArgument, "feature arity mismatch: got " + std::to_string(x.size()) + ", forest expects " +
                                         std::to_string(draw.n_features));
  return draw.prob_unchecked(x.data());
}

namespace {

struct SNode {
  int feature = -1;
  double cut = 0.0;
  double value = 0.0;
  int parent = -1, left = -1, right = -1;
  int depth = 0;
};

struct STree {
  std::vector<SNode> nodes;
  std::vector<int> free_slots;

  int add(const SNode& n) {
    if (!free_slots.empty()) {
      int id = free_slots.back();
      free_slots.pop_back();
      nodes[static_cast<size_t>(id)] = n;
      return id;
    }
    nodes.push_back(n);
    return static_cast<int>(nodes.size()) - 1;
  }
  void release(int id) {
    nodes[static_cast<size_t>(id)] = SNode{};
    nodes[static_cast<size_t>(id)].depth = -1;
    free_slots.push_back(id);
  }
  bool live(int id) const { return nodes[static_cast<size_t>(id)].depth >= 0; }
  bool is_leaf(int id) const { return nodes[static_cast<size_t>(id)].feature < 0; }
  bool is_nog(int id) const {
    const auto& n = nodes[static_cast<size_t>(id)];
    return n.feature >= 0 && is_leaf(n.left) && is_leaf(n.right);
  }
  std::vector<int> leaves() const {
    std::vector<int> out;
    for (size_t i = 0; i < nodes.size(); ++i)
      if (live(static_cast<int>(i)) && is_leaf(static_cast<int>(i))) out.push_back(static_cast<int>(i));
    return out;
  }
  std::vector<int> nogs() const {
    std::vector<int> out;
    for (size_t i = 0; i < nodes.size(); ++i)
      if (live(static_cast<int>(i)) && is_nog(static_cast<int>(i))) out.push_back(static_cast<int>(i));
    return out;
  }
  bool root_only() const { return is_leaf(0); }
};

class Sampler {
 public:
  Sampler(const Matrix& X, const BartConfig& cfg) : n_(X.rows), p_(X.cols), cfg_(cfg), rng_(cfg.seed) {
    xc_.resize(n_ * p_);
    for (size_t i = 0; i < n_; ++i)
      for (size_t f = 0; f < p_; ++f) xc_[f * n_ + i] = X(i, f);
    trees_.resize(static_cast<size_t>(cfg.n_trees));
    leaf_of_.assign(static_cast<size_t>(cfg.n_trees), std::vector<int>(n_, 0));
    for (auto& t : trees_) t.add(SNode{});
    fit_.assign(n_, 0.0);
    resid_.assign(n_, 0.0);
    target_.assign(n_, 0.0);
  }

  double x(size_t i, int f) const { return xc_[static_cast<size_t>(f) * n_ + i]; }

  void set_target(std::vector<double> t) { target_ = std::move(t); }
  std::vector<double>& target() { return target_; }
  const std::vector<double>& fit() const { return fit_; }

  void set_noise(double sigma2) { sigma2_ = sigma2; }
  double noise() const { return sigma2_; }
  void set_leaf_sd(double tau) { tau2_ = tau * tau; }

  void sweep_trees() {
    for (size_t t = 0; t < trees_.size(); ++t) update_tree(t);
  }

  Tree compact(size_t t, double leaf_scale = 1.0) const {
    Tree out;
    const auto& st = trees_[t];
    std::function<int(int)> emit = [&](int id) -> int {
      const auto& sn = st.nodes[static_cast<size_t>(id)];
      int my = static_cast<int>(out.nodes.size());
      out.nodes.push_back(Node{});
      if (sn.feature < 0) {
        out.nodes[static_cast<size_t>(my)].value = sn.value * leaf_scale;
        return my;
      }
      out.nodes[static_cast<size_t>(my)].feature = sn.feature;
      out.nodes[static_cast<size_t>(my)].cut = sn.cut;
      int l = emit(sn.left);
      int r = emit(sn.right);
      out.nodes[static_cast<size_t>(my)].left = l;
      out.nodes[static_cast<size_t>(my)].right = r;
      return my;
    };
    emit(0);
    return out;
  }

  size_t accepted = 0, proposed = 0;

 private:
  double log_lik(size_t cnt, double sum) const {
    if (cfg_.prior_only) return 0.0;
    double denom = sigma2_ + static_cast<double>(cnt) * tau2_;
    return 0.5 * std::log(sigma2_ / denom) + tau2_ * sum * sum / (2.0 * sigma2_ * denom);
  }

  bool splittable(const std::vector<size_t>& obs) const {
    if (obs.size() < 2) return false;
    for (size_t f = 0; f < p_; ++f) {
      double v0 = x(obs[0], static_cast<int>(f));
      for (size_t i : obs)
        if (x(i, static_cast<int>(f)) != v0) return true;
    }
    return false;
  }

  std::vector<int> available_features(const std::vector<size_t>& obs) const {
    std::vector<int> out;
    if (obs.size() < 2) return out;
    for (size_t f = 0; f < p_; ++f) {
      double v0 = x(obs[0], static_cast<int>(f));
      for (size_t i : obs)
        if (x(i, static_cast<int>(f)) != v0) {
          out.push_back(static_cast<int>(f));
          break;
        }
    }
    return out;
  }

  // distinct values except the largest
  std::vector<double> cut_values(const std::vector<size_t>& obs, int f) const {
    std::vector<double> v;
    v.reserve(obs.size());
    for (size_t i : obs) v.push_back(x(i, f));
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    v.pop_back();
    return v;
  }

  double leaf_prior_term(int depth, bool can_split) const {
    return can_split ? 1.0 - split_prior_prob(depth, cfg_.alpha, cfg_.beta) : 1.0;
  }

  struct Stats {
    size_t n = 0;
    double sum = 0.0;
  };
  Stats stats(const std::vector<size_t>& obs) const {
    Stats s;
    s.n = obs.size();
    for (size_t i : obs) s.sum += resid_[i];
    return s;
  }

  std::vector<size_t> obs_of(size_t t, std::initializer_list<int> ids) const {
    std::vector<size_t> out;
    const auto& lo = leaf_of_[t];
    for (size_t i = 0; i < n_; ++i)
      for (int id : ids)
        if (lo[i] == id) {
          out.push_back(i);
          break;
        }
    return out;
  }

  void partition(const std::vector<size_t>& obs, int f, double cut, std::vector<size_t>& l,
                 std::vector<size_t>& r) const {
    l.clear();
    r.clear();
    for (size_t i : obs) (x(i, f) <= cut ? l : r).push_back(i);
  }

  double move_prob_grow(const STree& t) const {
    if (t.root_only()) return 1.0;
    return cfg_.p_grow / (cfg_.p_grow + cfg_.p_prune + cfg_.p_change);
  }
  double move_prob_prune(const STree& t) const {
    if (t.root_only()) return 0.0;
    return cfg_.p_prune / (cfg_.p_grow + cfg_.p_prune + cfg_.p_change);
  }

  void grow(size_t t) {
    auto& tree = trees_[t];
    auto leaves = tree.leaves();
    int leaf = leaves[rng_.below(leaves.size())];
    auto obs = obs_of(t, {leaf});
    auto feats = available_features(obs);
    if (feats.empty()) return;
    int f = feats[rng_.below(feats.size())];
    auto cuts = cut_values(obs, f);
    double cut = cuts[rng_.below(cuts.size())];
    std::vector<size_t> l, r;
    partition(obs, f, cut, l, r);

    int depth = tree.nodes[static_cast<size_t>(leaf)].depth;
    double ps = split_prior_prob(depth, cfg_.alpha, cfg_.beta);
    double log_prior = std::log(ps) - std::log(1.0 - ps) + std::log(leaf_prior_term(depth + 1, splittable(l))) +
                       std::log(leaf_prior_term(depth + 1, splittable(r)));

    size_t b = leaves.size();
    size_t nogs = tree.nogs().size();
    int parent = tree.nodes[static_cast<size_t>(leaf)].parent;
    size_t nogs_after = nogs + 1 - (parent >= 0 && tree.is_nog(parent) ? 1 : 0);
    double pg = move_prob_grow(tree);
    double pp_after = cfg_.p_prune / (cfg_.p_grow + cfg_.p_prune + cfg_.p_change);

    Stats sl = stats(l), sr = stats(r), sp = stats(obs);
    double log_ratio = std::log(pp_after) - std::log(pg) + std::log(static_cast<double>(b)) -
                       std::log(static_cast<double>(nogs_after)) + log_lik(sl.n, sl.sum) + log_lik(sr.n, sr.sum) -
                       log_lik(sp.n, sp.sum) + log_prior;
    ++proposed;
    if (std::log(rng_.uniform()) >= log_ratio) return;
    ++accepted;

    SNode child;
    child.parent = leaf;
    child.depth = depth + 1;
    int lid = tree.add(child);
    int rid = tree.add(child);
    auto& nd = tree.nodes[static_cast<size_t>(leaf)];
    nd.feature = f;
    nd.cut = cut;
    nd.left = lid;
    nd.right = rid;
    for (size_t i : l) leaf_of_[t][i] = lid;
    for (size_t i : r) leaf_of_[t][i] = rid;
  }

  void prune(size_t t) {
    auto& tree = trees_[t];
    auto nogs = tree.nogs();
    int id = nogs[rng_.below(nogs.size())];
    const auto& nd = tree.nodes[static_cast<size_t>(id)];
    int lid = nd.left, rid = nd.right;
    auto l = obs_of(t, {lid});
    auto r = obs_of(t, {rid});
    std::vector<size_t> obs;
    obs.reserve(l.size() + r.size());
    std::merge(l.begin(), l.end(), r.begin(), r.end(), std::back_inserter(obs));

    int depth = nd.depth;
    double ps = split_prior_prob(depth, cfg_.alpha, cfg_.beta);
    double log_prior = std::log(1.0 - ps) - std::log(ps) - std::log(leaf_prior_term(depth + 1, splittable(l))) -
                       std::log(leaf_prior_term(depth + 1, splittable(r)));

    size_t b_after = tree.leaves().size() - 1;
    bool root_after = id == 0;
    double pg_after = root_after ? 1.0 : cfg_.p_grow / (cfg_.p_grow + cfg_.p_prune + cfg_.p_change);
    double pp = move_prob_prune(tree);
    Stats sl = stats(l), sr = stats(r), sp = stats(obs);
    double log_ratio = std::log(pg_after) - std::log(pp) + std::log(static_cast<double>(nogs.size())) -
                       std::log(static_cast<double>(b_after)) + log_lik(sp.n, sp.sum) - log_lik(sl.n, sl.sum) -
                       log_lik(sr.n, sr.sum) + log_prior;
    ++proposed;
    if (std::log(rng_.uniform()) >= log_ratio) return;
    ++accepted;

    tree.release(lid);
    tree.release(rid);
    auto& node = tree.nodes[static_cast<size_t>(id)];
    node.feature = -1;
    node.cut = 0.0;
    node.left = node.right = -1;
    for (size_t i : obs) leaf_of_[t][i] = id;
  }

  void change(size_t t) {
    auto& tree = trees_[t];
    auto nogs = tree.nogs();
    int id = nogs[rng_.below(nogs.size())];
    const auto& nd = tree.nodes[static_cast<size_t>(id)];
    int lid = nd.left, rid = nd.right;
    auto l_old = obs_of(t, {lid});
    auto r_old = obs_of(t, {rid});
    std::vector<size_t> obs;
    std::merge(l_old.begin(), l_old.end(), r_old.begin(), r_old.end(), std::back_inserter(obs));
    auto feats = available_features(obs);
    int f = feats[rng_.below(feats.size())];
    auto cuts = cut_values(obs, f);
    double cut = cuts[rng_.below(cuts.size())];
    std::vector<size_t> l, r;
    partition(obs, f, cut, l, r);

    int d1 = nd.depth + 1;
    double log_prior = std::log(leaf_prior_term(d1, splittable(l))) + std::log(leaf_prior_term(d1, splittable(r))) -
                       std::log(leaf_prior_term(d1, splittable(l_old))) -
                       std::log(leaf_prior_term(d1, splittable(r_old)));
    Stats sl = stats(l), sr = stats(r), slo = stats(l_old), sro = stats(r_old);
    double log_ratio = log_lik(sl.n, sl.sum) + log_lik(sr.n, sr.sum) - log_lik(slo.n, slo.sum) -
                       log_lik(sro.n, sro.sum) + log_prior;
    ++proposed;
    if (std::log(rng_.uniform()) >= log_ratio) return;
    ++accepted;
    auto& node = tree.nodes[static_cast<size_t>(id)];
    node.feature = f;
    node.cut = cut;
    for (size_t i : l) leaf_of_[t][i] = lid;
    for (size_t i : r) leaf_of_[t][i] = rid;
  }

  void update_tree(size_t t) {
    auto& tree = trees_[t];
    auto& lo = leaf_of_[t];
    for (size_t i = 0; i < n_; ++i) resid_[i] = target_[i] - fit_[i] + tree.nodes[static_cast<size_t>(lo[i])].value;

    double total = cfg_.p_grow + cfg_.p_prune + cfg_.p_change;
    if (tree.root_only()) {
      grow(t);
    } else {
      double u = rng_.uniform() * total;
      if (u < cfg_.p_grow) grow(t);
      else if (u < cfg_.p_grow + cfg_.p_prune) prune(t);
      else change(t);
    }

    // conjugate leaf draws
    auto leaves = tree.leaves();
    leaf_n_.assign(tree.nodes.size(), 0.0);
    leaf_s_.assign(tree.nodes.size(), 0.0);
    if (!cfg_.prior_only) {
      for (size_t i = 0; i < n_; ++i) {
        leaf_n_[static_cast<size_t>(lo[i])] += 1.0;
        leaf_s_[static_cast<size_t>(lo[i])] += resid_[i];
      }
    }
    for (int id : leaves) {
      double nn = leaf_n_[static_cast<size_t>(id)], s = leaf_s_[static_cast<size_t>(id)];
      double denom = sigma2_ + nn * tau2_;
      double mean = tau2_ * s / denom;
      double var = sigma2_ * tau2_ / denom;
      tree.nodes[static_cast<size_t>(id)].value = mean + std::sqrt(var) * rng_.normal();
    }
    for (size_t i = 0; i < n_; ++i) fit_[i] = target_[i] - resid_[i] + tree.nodes[static_cast<size_t>(lo[i])].value;
  }

 public:
  rng::Engine& engine() { return rng_; }
  size_t n() const { return n_; }

 private:
  size_t n_, p_;
  BartConfig cfg_;
  rng::Engine rng_;
  std::vector<double> xc_;
  std::vector<STree> trees_;
  std::vector<std::vector<int>> leaf_of_;
  std::vector<double> fit_, resid_, target_;
  std::vector<double> leaf_n_, leaf_s_;
  double sigma2_ = 1.0, tau2_ = 1.0;
};

constexpr double kSigma2Floor = 1e-16;

void check_shape(const Matrix& X, size_t n) {
  if (n == 0 || X.rows == 0) fail(ErrorKind::InvalidArgument, "empty training set");
  if (X.rows != n) fail(ErrorKind::InvalidArgument, "feature rows do not match response length");
}

}  // namespace

FitResult fit_continuous(const Matrix& X, std::span<const double> y, const BartConfig& cfg) {
  cfg.validate();
  check_shape(X, y.size());
  size_t n = y.size();
  for (double v : y)
    if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "non-finite response");

  auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  double offset = 0.5 * (*mn + *mx);
  double scale = *mx - *mn;
  if (!(scale > 0)) scale = 1.0;

  std::vector<double> t(n);
  double mean = 0.0;
  for (size_t i = 0; i < n; ++i) {
    t[i] = (y[i] - offset) / scale;
    mean += t[i];
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : t) var += (v - mean) * (v - mean);
  var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;

  double lambda = var * rng::chisq_quantile(1.0 - cfg.q, cfg.nu) / cfg.nu;
  Sampler s(X, cfg);
  s.set_target(t);
  s.set_leaf_sd(0.5 / (cfg.k * std::sqrt(static_cast<double>(cfg.n_trees))));
  s.set_noise(std::max(var, kSigma2Floor));

  FitResult res;
  int total = cfg.n_burn + cfg.n_keep * cfg.thin;
  for (int it = 0; it < total; ++it) {
    s.sweep_trees();
    double ssr = 0.0;
    if (!cfg.prior_only) {
      const auto& f = s.fit();
      for (size_t i = 0; i < n; ++i) ssr += (t[i] - f[i]) * (t[i] - f[i]);
    }
    double df = cfg.nu + (cfg.prior_only ? 0.0 : static_cast<double>(n));
    double sig2 = (cfg.nu * lambda + ssr) / s.engine().chisq(df);
    s.set_noise(std::max(sig2, kSigma2Floor));

    if (it >= cfg.n_burn && (it - cfg.n_burn + 1) % cfg.thin == 0) {
      ForestDraw d;
      d.link = Link::Continuous;
      d.n_features = static_cast<int>(X.cols);
      d.offset = offset;
      d.scale = scale;
      d.sigma = std::sqrt(s.noise()) * scale;
      d.trees.reserve(static_cast<size_t>(cfg.n_trees));
      for (size_t k = 0; k < static_cast<size_t>(cfg.n_trees); ++k) d.trees.push_back(s.compact(k));
      res.draws.push_back(std::move(d));
    }
  }
  res.accept_rate = s.proposed ? static_cast<double>(s.accepted) / static_cast<double>(s.proposed) : 0.0;
  return res;
}

FitResult fit_probit(const Matrix& X, std::span<const double> b, const BartConfig& cfg) {
  cfg.validate();
  check_shape(X, b.size());
  size_t n = b.size();
  size_t ones = 0;
  for (double v : b) {
    if (v != 0.0 && v != 1.0) fail(ErrorKind::InvalidArgument, "probit response must be 0/1");
    ones += v == 1.0;
  }
  FitResult res;
  if (ones == 0 || ones == n)
    res.warnings.push_back(std::string("saturated binary response (all ") + (ones ? "1" : "0") + ")");

  Sampler s(X, cfg);
  s.set_leaf_sd(3.0 / (cfg.k * std::sqrt(static_cast<double>(cfg.n_trees))));
  s.set_noise(1.0);
  std::vector<double> z(n, 0.0);
  s.set_target(z);

  int total = cfg.n_burn + cfg.n_keep * cfg.thin;
  for (int it = 0; it < total; ++it) {
    if (!cfg.prior_only) {
      auto& tg = s.target();
      const auto& f = s.fit();
      auto& eng = s.engine();
      for (size_t i = 0; i < n; ++i)
        tg[i] = b[i] == 1.0 ? f[i] + eng.trunc_normal_above(-f[i]) : f[i] - eng.trunc_normal_above(f[i]);
    }
    s.sweep_trees();
    if (it >= cfg.n_burn && (it - cfg.n_burn + 1) % cfg.thin == 0) {
      ForestDraw d;
      d.link = Link::Probit;
      d.n_features = static_cast<int>(X.cols);
      d.trees.reserve(static_cast<size_t>(cfg.n_trees));
      for (size_t k = 0; k < static_cast<size_t>(cfg.n_trees); ++k) d.trees.push_back(s.compact(k));
      res.draws.push_back(std::move(d));
    }
  }
  res.accept_rate = s.proposed ? static_cast<double>(s.accepted) / static_cast<double>(s.proposed) : 0.0;
  return res;
}

void write_forest(std::ostream& out, const ForestDraw& d) {
  out << "forest " << (d.link == Link::Continuous ? "continuous" : "probit") << ' ' << d.n_features << ' '
      << fmt_double(d.offset) << ' ' << fmt_double(d.scale) << ' ' << fmt_double(d.sigma) << ' ' << d.trees.size()
      << '\n';
  for (const auto& t : d.trees) {
    out << t.nodes.size();
    for (const auto& nd : t.nodes) {
      if (nd.feature < 0) out << " L " << fmt_double(nd.value);
      else out << " S " << nd.feature << ' ' << fmt_double(nd.cut);
    }
    out << '\n';
  }
}

namespace {
std::string next_token(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) fail(ErrorKind::Parse, "truncated forest record");
  return tok;
}
}  // namespace

ForestDraw read_forest(std::istream& in) {
  ForestDraw d;
  if (next_token(in) != "forest") fail(ErrorKind::Parse, "expected forest header");
  auto link = next_token(in);
  if (link == "continuous") d.link = Link::Continuous;
  else if (link == "probit") d.link = Link::Probit;
  else fail(ErrorKind::Parse, "unknown link '" + link + "'");
  d.n_features = static_cast<int>(parse_int(next_token(in), "forest features"));
  d.offset = parse_double(next_token(in), "forest offset");
  d.scale = parse_double(next_token(in), "forest scale");
  d.sigma = parse_double(next_token(in), "forest sigma");
  auto n_trees = static_cast<size_t>(parse_int(next_token(in), "forest tree count"));
  d.trees.resize(n_trees);
  for (auto& t : d.trees) {
    auto n_nodes = static_cast<size_t>(parse_int(next_token(in), "tree size"));
    t.nodes.resize(n_nodes);
    for (auto& nd : t.nodes) {
      auto kind = next_token(in);
      if (kind == "L") {
        nd.value = parse_double(next_token(in), "leaf value");
      } else if (kind == "S") {
        nd.feature = static_cast<int>(parse_int(next_token(in), "split feature"));
        nd.cut = parse_double(next_token(in), "split cut");
      } else {
        fail(ErrorKind::Parse, "bad node tag '" + kind + "'");
      }
    }
    // rebuild child links from preorder
    size_t pos = 0;
    std::function<int()> link_up = [&]() -> int {
      if (pos >= t.nodes.size()) fail(ErrorKind::Parse, "malformed tree preorder");
      int me = static_cast<int>(pos++);
      if (t.nodes[static_cast<size_t>(me)].feature >= 0) {
        int l = link_up();
        int r = link_up();
        t.nodes[static_cast<size_t>(me)].left = l;
        t.nodes[static_cast<size_t>(me)].right = r;
      }
      return me;
    };
    link_up();
    if (pos != t.nodes.size()) fail(ErrorKind::Parse, "malformed tree preorder");
    for (const auto& nd : t.nodes)
      if (nd.feature >= d.n_features) fail(ErrorKind::Parse, "split feature out of range");
  }
  return d;
}

}  // namespace sace::bart
