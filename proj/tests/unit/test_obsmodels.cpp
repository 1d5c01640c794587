#include <cmath>

#include "doctest.h"
#include "sace/dgp.hpp"
#include "sace/error.hpp"
#include "sace/obsmodels.hpp"
#include "support.hpp"

using namespace sace;

namespace {

StackOptions quick_options(int chains, int keep, uint64_t seed = 5) {
  StackOptions o;
  for (auto& b : o.bart) {
    b.n_trees = 20;
    b.n_burn = 100;
    b.n_keep = keep;
  }
  o.n_chains = chains;
  o.seed = seed;
  return o;
}

double avg_mean_y(const BartStack& st, int wave, const HistoryView& h) {
  double s = 0;
  int k = 0;
  for (int c = 0; c < st.chains; ++c)
    for (int m = 0; m < st.keep; ++m, ++k) s += cond_mean_y(*st.draw(c, m), wave, h);
  return s / k;
}

double avg_prob(const BartStack& st, Factor f, int wave, const HistoryView& h) {
  double s = 0;
  int k = 0;
  for (int c = 0; c < st.chains; ++c)
    for (int m = 0; m < st.keep; ++m, ++k) s += cond_prob(*st.draw(c, m), f, wave, h);
  return s / k;
}

}  // namespace

TEST_CASE("degenerate survival and retention factors still give a stack") {
  auto d = testing::full_cohort(120, 2, 2, 1, [](size_t, int, WaveRecord& r, rng::Engine& e) {
    r.y = e.normal();
    r.w = e.uniform() < 0.5;
    r.z = e.uniform() < 0.3;
  });
  auto st = fit_stack(d, quick_options(1, 10));
  CHECK(st.get(Factor::S, 1).chains[0].size() == 10);
  CHECK(st.get(Factor::R, 1).chains[0].size() == 10);
  bool s_warn = false, r_warn = false;
  for (const auto& w : st.warnings()) {
    s_warn |= w.rfind("S_1:", 0) == 0 && w.find("saturated") != std::string::npos;
    r_warn |= w.rfind("R_1:", 0) == 0 && w.find("saturated") != std::string::npos;
  }
  CHECK(s_warn);
  CHECK(r_warn);
  std::vector<double> y{0.1};
  std::vector<int> z{0}, w{1};
  double p = avg_prob(st, Factor::S, 1, HistoryView{y, z, w, 0});
  CHECK(p >= 0.9);
  CHECK(p <= 1.0 - 1e-12);
}

TEST_CASE("baseline posterior follows the conjugate update") {
  auto d = testing::full_cohort(100, 1, 2, 1, [](size_t, int, WaveRecord& r, rng::Engine& e) { r.y = e.normal(); });
  for (size_t i = 0; i < d.people.size(); ++i) d.people[i].x0 = i < 30 ? 0 : 1;
  CHECK(baseline_counts(d) == std::vector<double>{30, 70});
  auto o = quick_options(4, 500);
  for (auto& b : o.bart) {
    b.n_trees = 1;
    b.n_burn = 0;
  }
  auto st = fit_stack(d, o);
  double m0 = 0;
  size_t n = 0;
  for (const auto& chain : st.baseline_draws)
    for (const auto& pi : chain) {
      CHECK(std::fabs(pi[0] + pi[1] - 1.0) < 1e-12);
      m0 += pi[0];
      ++n;
    }
  m0 /= static_cast<double>(n);
  double expect = 31.0 / 102.0;
  double se = std::sqrt(expect * (1 - expect) / 103.0 / static_cast<double>(n));
  CHECK(std::fabs(m0 - expect) < 3 * se);
  CHECK(expect == doctest::Approx(0.302).epsilon(0.01));
}

TEST_CASE("constant outcome is reproduced for any history") {
  auto d = testing::full_cohort(150, 2, 2, 2, [](size_t, int, WaveRecord& r, rng::Engine& e) {
    r.y = 10.0;
    r.w = e.uniform() < 0.5;
    r.z = e.uniform() < 0.3;
  });
  auto st = fit_stack(d, quick_options(1, 10));
  for (double lag : {-3.0, 10.0, 25.0}) {
    std::vector<double> y{lag};
    std::vector<int> z{0, 1}, w{1, 0};
    CHECK(std::fabs(avg_mean_y(st, 1, HistoryView{y, z, w, 1}) - 10.0) < 1e-3);
  }
}

TEST_CASE("outcome model recovers an exposure effect") {
  auto d = testing::full_cohort(600, 2, 2, 3, [](size_t, int j, WaveRecord& r, rng::Engine& e) {
    r.w = e.uniform() < 0.5;
    r.z = j > 0 && e.uniform() < 0.5;
    r.y = 5.0 + 3.0 * *r.z;
  });
  auto st = fit_stack(d, quick_options(1, 20));
  std::vector<double> y{5.0};
  std::vector<int> z1{0, 1}, z0{0, 0}, w{0, 1};
  double diff = avg_mean_y(st, 1, HistoryView{y, z1, w, 0}) - avg_mean_y(st, 1, HistoryView{y, z0, w, 0});
  CHECK(diff >= 2.5);
  CHECK(diff <= 3.5);
}

TEST_CASE("balanced exposure probability") {
  auto d = testing::full_cohort(600, 2, 2, 4, [](size_t, int j, WaveRecord& r, rng::Engine& e) {
    r.w = e.uniform() < 0.5;
    r.z = j > 0 && e.uniform() < 0.5;
    r.y = e.normal();
  });
  auto st = fit_stack(d, quick_options(1, 20));
  std::vector<double> y{0.0};
  std::vector<int> z{0}, w{0, 1};
  double p = avg_prob(st, Factor::Z, 1, HistoryView{y, z, w, 1});
  CHECK(std::fabs(p - 0.5) < 0.1);
}

TEST_CASE("arity errors") {
  auto d = testing::full_cohort(50, 2, 2, 1, [](size_t, int, WaveRecord& r, rng::Engine& e) { r.y = e.normal(); });
  auto st = fit_stack(d, quick_options(1, 2));
  auto m = st.draw(0, 0);
  std::vector<double> y{1.0};
  std::vector<int> z{0}, w{1};
  CHECK_THROWS_AS(cond_mean_y(*m, 0, HistoryView{y, z, w, 0}), Error);
  std::vector<double> none;
  CHECK_NOTHROW(cond_mean_y(*m, 0, HistoryView{none, z, w, 0}));
  CHECK_THROWS_AS(cond_prob(*m, Factor::Y, 1, HistoryView{y, z, w, 0}), Error);
  CHECK_THROWS_AS(st.draw(1, 0), Error);
  CHECK_THROWS_AS(st.draw(0, 2), Error);
}

TEST_CASE("sample_baseline") {
  rng::Engine e(9);
  std::vector<double> one{1, 0, 0};
  for (int c : sample_baseline(one, 1000, e)) CHECK(c == 0);
  std::vector<double> half{0.5, 0.5};
  auto v = sample_baseline(half, 100000, e);
  double f = 0;
  for (int c : v) f += c == 0;
  CHECK(std::fabs(f / 100000 - 0.5) < 0.01);
  CHECK(sample_baseline(half, 0, e).empty());
}

TEST_CASE("stack layouts mirror the factorization") {
  auto sim = dgp::generate_cohort(dgp::preset("toy"), 300, 3);
  auto st = fit_stack(sim.data, quick_options(1, 2));
  for (const auto& fd : st.factors) {
    auto l = layout_for(fd.factor, fd.wave, sim.data.n_cells);
    CHECK(fd.layout.names() == l.names());
    CHECK(fd.chains[0][0].n_features == l.size());
  }
  CHECK(st.get(Factor::Y, 0).layout.n_y == 0);
  CHECK(st.factors.size() == 2 + 5 * 2);
  CHECK_THROWS_AS(st.get(Factor::S, 0), Error);
}

TEST_CASE("factor samplers are independent of fit order and worker count") {
  auto sim = dgp::generate_cohort(dgp::preset("recovery"), 200, 4);
  auto o = quick_options(2, 5, 17);
  o.workers = 1;
  auto a = fit_stack(sim.data, o);
  o.workers = 3;
  auto b = fit_stack(sim.data, o);
  for (size_t f = 0; f < a.factors.size(); ++f)
    for (int c = 0; c < 2; ++c)
      for (int m = 0; m < 5; ++m) {
        const auto& da = a.factors[f].chains[static_cast<size_t>(c)][static_cast<size_t>(m)];
        const auto& db = b.factors[f].chains[static_cast<size_t>(c)][static_cast<size_t>(m)];
        CHECK(da.trees.size() == db.trees.size());
        CHECK(da.sigma == db.sigma);
      }
  // one factor fitted alone with its derived seed equals its stack draws
  const auto& fd = a.get(Factor::Y, 1);
  auto sub = model_subset(sim.data, Factor::Y, 1);
  auto cfg = o.bart[0];
  cfg.seed = fd.seeds[1];
  auto alone = bart::fit_continuous(sub.X, sub.response, cfg);
  for (int m = 0; m < 5; ++m)
    for (size_t i = 0; i < sub.n(); i += 17)
      CHECK(alone.draws[static_cast<size_t>(m)].mean_unchecked(sub.X.row(i)) ==
            fd.chains[1][static_cast<size_t>(m)].mean_unchecked(sub.X.row(i)));
}

TEST_CASE("stack persistence") {
  auto sim = dgp::generate_cohort(dgp::preset("toy"), 200, 5);
  auto st = fit_stack(sim.data, quick_options(2, 3));
  auto dir = testing::temp_dir("obsmodels_stack");
  auto h = dataset_hash(sim.data);
  save_stack(st, dir, h, "seed=5\n");
  std::string text;
  auto back = load_stack(dir, h, &text);
  CHECK(text == "seed=5\n");
  CHECK(back.factors.size() == st.factors.size());
  CHECK(back.baseline_draws == st.baseline_draws);
  std::vector<double> y{1.0};
  std::vector<int> z{0, 1}, w{1, 1};
  HistoryView hv{y, z, w, 1};
  for (int c = 0; c < 2; ++c)
    for (int m = 0; m < 3; ++m) {
      CHECK(cond_mean_y(*back.draw(c, m), 1, hv) == cond_mean_y(*st.draw(c, m), 1, hv));
      CHECK(back.draw(c, m)->sd_y(1) == st.draw(c, m)->sd_y(1));
    }
  try {
    load_stack(dir, h + 1);
    FAIL("expected a mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Mismatch);
  }
}
