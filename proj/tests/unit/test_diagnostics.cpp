#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "sace/diagnostics.hpp"
#include "sace/dgp.hpp"
#include "sace/error.hpp"
#include "sace/rng.hpp"

using namespace sace;
using namespace sace::diagnostics;

namespace {

// constant laws; draw m shifts the outcome mean by m
class ConstModel : public ObservedDataModel {
 public:
  explicit ConstModel(double shift) : shift_(shift) {}
  int n_waves() const override { return 2; }
  int n_cells() const override { return 2; }
  double mean_y(int, const double*) const override { return 1.0 + shift_; }
  double sd_y(int) const override { return 2.0; }
  double prob(Factor f, int, const double*) const override {
    switch (f) {
      case Factor::W: return 0.4;
      case Factor::Z: return 0.3;
      case Factor::S: return 0.9;
      case Factor::R: return 0.8;
      default: return 0.0;
    }
  }
  std::span<const double> baseline() const override { return pi_; }

 private:
  double shift_;
  std::vector<double> pi_{0.25, 0.75};
};

class ConstStack : public PosteriorStack {
 public:
  int keep = 2;
  std::vector<double> shifts{0.0, 0.0};
  int n_waves() const override { return 2; }
  int n_cells() const override { return 2; }
  int n_chains() const override { return 1; }
  int n_keep() const override { return keep; }
  std::unique_ptr<ObservedDataModel> draw(int, int m) const override {
    return std::make_unique<ConstModel>(shifts[static_cast<size_t>(m)]);
  }
  std::vector<std::string> warnings() const override { return {}; }
};

CohortDataset small_data() {
  CohortDataset d;
  d.n_waves = 2;
  d.n_cells = 2;
  d.cell_labels = {"a", "b"};
  Individual p;
  p.id = "full";
  p.x0 = 1;
  p.waves = {{0.5, 0, 1, 1, 1}, {2.0, 1, 0, 1, 1}};
  d.people.push_back(p);
  p.id = "dead";
  p.x0 = 0;
  p.waves = {{-1.0, 0, 0, 1, 1}, {std::nullopt, std::nullopt, std::nullopt, 0, 0}};
  d.people.push_back(p);
  p.id = "drop";
  p.waves = {{0.0, 0, 1, 1, 1}, {std::nullopt, std::nullopt, std::nullopt, 0, 1}};
  d.people.push_back(p);
  return d;
}

double gauss_log(double y, double mu, double sd) {
  double z = (y - mu) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2 * M_PI);
}

}  // namespace

TEST_CASE("quantiles and summaries") {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  CHECK(quantile(v, 0.025) == doctest::Approx(3.475));
  CHECK(quantile(v, 0.975) == doctest::Approx(97.525));
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 100.0);
  std::reverse(v.begin(), v.end());
  auto s = summarize(v);
  CHECK(s.mean == doctest::Approx(50.5));
  CHECK(s.q50 == doctest::Approx(50.5));
  CHECK(s.q025 == doctest::Approx(3.475));
  CHECK(s.n == 100);
  std::vector<double> c(10, 4.2);
  auto sc = summarize(c);
  CHECK(sc.sd < 1e-12);
  CHECK(sc.q025 == 4.2);
  CHECK(sc.q975 == 4.2);
  std::vector<double> empty;
  CHECK_THROWS_AS(summarize(empty), Error);
  CHECK_THROWS_AS(quantile(empty, 0.5), Error);
}

TEST_CASE("trace statistics") {
  rng::Engine e(3);
  std::vector<double> base(1000);
  for (auto& x : base) x = e.normal();
  auto same = trace_stats({base, base, base, base});
  CHECK(same.rhat < 1.02);
  CHECK_FALSE(same.flagged);
  CHECK(same.n_chains == 8);
  CHECK(same.n_per_chain == 500);

  std::vector<double> shifted = base;
  for (auto& x : shifted) x += 10.0;
  auto apart = trace_stats({base, shifted});
  CHECK(apart.rhat > 1.1);
  CHECK(apart.flagged);

  auto single = trace_stats({base});
  CHECK(single.n_chains == 2);
  CHECK(single.n_per_chain == 500);
  CHECK(single.rhat < 1.05);

  std::vector<double> trend(1000);
  for (size_t i = 0; i < trend.size(); ++i) trend[i] = static_cast<double>(i) / 100.0 + 0.1 * e.normal();
  CHECK(trace_stats({trend}).flagged);

  auto flat = trace_stats({std::vector<double>(20, 1.5), std::vector<double>(20, 1.5)});
  CHECK(flat.rhat == 1.0);
  CHECK_FALSE(flat.flagged);
}

TEST_CASE("LPML with constant laws equals the log likelihood") {
  ConstStack st;
  auto d = small_data();
  auto rep = lpml(st, d);
  REQUIRE(rep.log_cpo.size() == 3);
  double full = std::log(0.75) + std::log(0.4) + gauss_log(0.5, 1, 2) + std::log(0.9) + std::log(0.8) +
                std::log(0.3) + std::log(0.6) + gauss_log(2.0, 1, 2);
  double dead = std::log(0.25) + std::log(0.6) + gauss_log(-1.0, 1, 2) + std::log(0.1);
  double drop = std::log(0.25) + std::log(0.4) + gauss_log(0.0, 1, 2) + std::log(0.9) + std::log(0.2);
  CHECK(rep.log_cpo[0] == doctest::Approx(full));
  CHECK(rep.log_cpo[1] == doctest::Approx(dead));
  CHECK(rep.log_cpo[2] == doctest::Approx(drop));
  CHECK(rep.total == doctest::Approx(full + dead + drop));
  CHECK(rep.baseline == doctest::Approx(std::log(0.75) + 2 * std::log(0.25)));
  CHECK(rep.by_factor[static_cast<size_t>(Factor::S)] == doctest::Approx(2 * std::log(0.9) + std::log(0.1)));
  CHECK(rep.n_draws == 2);
  CHECK(rep.cpo()[1] == doctest::Approx(std::exp(dead)));
}

TEST_CASE("LPML uses the harmonic mean over draws") {
  ConstStack st;
  st.shifts = {0.0, 1.0};
  auto d = small_data();
  d.people.resize(1);
  auto rep = lpml(st, d);
  double rest = std::log(0.75) + std::log(0.4) + std::log(0.9) + std::log(0.8) + std::log(0.3) + std::log(0.6);
  double l0 = rest + gauss_log(0.5, 1, 2) + gauss_log(2.0, 1, 2);
  double l1 = rest + gauss_log(0.5, 2, 2) + gauss_log(2.0, 2, 2);
  double expect = -std::log(0.5 * (std::exp(-l0) + std::exp(-l1)));
  CHECK(rep.total == doctest::Approx(expect));
}

TEST_CASE("LPML is additive over records") {
  auto sim = dgp::generate_cohort(dgp::preset("toy"), 200, 1);
  StackOptions so;
  for (auto& b : so.bart) {
    b.n_trees = 10;
    b.n_burn = 30;
    b.n_keep = 5;
  }
  so.n_chains = 2;
  auto st = fit_stack(sim.data, so);
  auto a = lpml(st, sim.data);
  CHECK(std::isfinite(a.total));
  CHECK(a.total < 0);

  auto dup = sim.data;
  dup.people.insert(dup.people.end(), sim.data.people.begin(), sim.data.people.end());
  CHECK(lpml(st, dup).total == doctest::Approx(2 * a.total).epsilon(1e-12));

  auto rev = sim.data;
  std::reverse(rev.people.begin(), rev.people.end());
  CHECK(std::fabs(lpml(st, rev).total - a.total) < 1e-9);
  CHECK(lpml(st, sim.data, 3).total == a.total);

  ConstStack one;
  one.keep = 1;
  one.shifts = {0.0};
  CHECK_THROWS_AS(lpml(one, small_data()), Error);
  auto wrong = dgp::generate_cohort(dgp::preset("exact_j3_dropout"), 20, 1);
  CHECK_THROWS_AS(lpml(st, wrong.data), Error);
}
