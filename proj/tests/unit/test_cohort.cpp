#include <algorithm>
#include <set>

#include "doctest.h"
#include "sace/cohort.hpp"
#include "sace/error.hpp"

using namespace sace;

namespace {

// builds one individual from per-wave r, s and an outcome at each observed wave
Individual person(const std::string& id, std::vector<int> r, std::vector<int> s, std::vector<int> z = {}, int x0 = 0) {
  Individual p;
  p.id = id;
  p.x0 = x0;
  for (size_t j = 0; j < r.size(); ++j) {
    WaveRecord w;
    w.r = r[j];
    w.s = s[j];
    if (r[j] == 1 && s[j] == 1) {
      w.y = 10.0 + static_cast<double>(j);
      w.z = z.empty() ? 0 : z[j];
      w.w = static_cast<int>(j % 2);
    }
    p.waves.push_back(w);
  }
  return p;
}

CohortDataset dataset(std::vector<Individual> people, int cells = 2) {
  CohortDataset d;
  d.n_waves = static_cast<int>(people.front().waves.size());
  d.n_cells = cells;
  d.cell_labels.assign(static_cast<size_t>(cells), "");
  d.people = std::move(people);
  return d;
}

bool has_rule(const ValidationReport& rep, const std::string& rule) {
  return std::any_of(rep.items.begin(), rep.items.end(), [&](const Violation& v) { return v.rule == rule; });
}

std::vector<OutcomeStatus> classify(std::vector<int> r, std::vector<int> s) { return classify_pattern(r, s); }

using S = OutcomeStatus;

}  // namespace

TEST_CASE("dropout while alive is a valid record") {
  auto d = dataset({person("a", {1, 1, 0, 0}, {1, 1, 1, 1})});
  auto rep = validate_cohort(d);
  CHECK(rep.ok());
  CHECK(d.people[0].waves[1].y.has_value());
  CHECK_FALSE(d.people[0].waves[2].y.has_value());
}

TEST_CASE("non-monotone retention is reported") {
  auto d = dataset({person("a", {1, 0, 1, 0}, {1, 1, 1, 1})});
  auto rep = validate_cohort(d);
  CHECK(has_rule(rep, "non-monotone retention"));
  CHECK(rep.items.front().id == "a");
}

TEST_CASE("participation after death is reported") {
  auto d = dataset({person("a", {1, 1, 1, 1}, {1, 1, 0, 0})});
  auto rep = validate_cohort(d);
  CHECK(has_rule(rep, "participation after death"));
  bool at_wave2 = false;
  for (const auto& v : rep.items) at_wave2 |= v.rule == "participation after death" && v.wave == 2;
  CHECK(at_wave2);
}

TEST_CASE("malformed records are listed, never repaired") {
  auto p = person("a", {1, 1, 0}, {1, 1, 1});
  p.waves[2].y = 3.0;  // value while unobserved
  auto q = person("b", {1, 1, 1}, {1, 1, 1}, {0, 1, 0});
  auto u = person("c", {1, 1, 1}, {1, 1, 1});
  u.waves[1].r = 2;
  auto d = dataset({p, q, u});
  auto rep = validate_cohort(d);
  CHECK(has_rule(rep, "value present while unobserved"));
  CHECK(has_rule(rep, "non-monotone exposure"));
  CHECK(has_rule(rep, "non-binary r"));
  CHECK(d.people[0].waves[2].y.has_value());
  CHECK_THROWS_AS(require_valid(d), Error);
}

TEST_CASE("baseline rules") {
  auto p = person("a", {1, 1}, {1, 1}, {1, 1});
  auto d = dataset({p});
  CHECK(has_rule(validate_cohort(d), "nonzero baseline exposure"));
  auto q = person("b", {1, 1}, {1, 1});
  q.x0 = 5;
  CHECK(has_rule(validate_cohort(dataset({q})), "baseline cell out of range"));
}

TEST_CASE("report text lists id,wave,rule") {
  auto rep = validate_cohort(dataset({person("a", {1, 0, 1}, {1, 1, 1})}));
  CHECK(rep.to_text().find("a,2,non-monotone retention") != std::string::npos);
}

TEST_CASE("classify_pattern table rows") {
  CHECK(classify({1, 0, 0, 0}, {1, 1, 1, 0}) == std::vector<S>{S::Observed, S::MissingStar, S::Missing, S::TruncatedByDeath});
  CHECK(classify({1, 1, 1, 1}, {1, 1, 1, 1}) == std::vector<S>{S::Observed, S::Observed, S::Observed, S::Observed});
  CHECK(classify({1, 1, 0, 0}, {1, 1, 0, 0}) ==
        std::vector<S>{S::Observed, S::Observed, S::TruncatedByDeath, S::TruncatedByDeath});
  CHECK_THROWS_WITH(classify({1, 0, 1, 0}, {1, 1, 1, 1}), "pattern not in Table 1");
  CHECK_THROWS_WITH(classify({1, 1, 1, 1}, {1, 1, 0, 0}), "pattern not in Table 1");
}

TEST_CASE("exactly ten admissible patterns for four waves") {
  auto pats = admissible_patterns(4);
  CHECK(pats.size() == 10);
  for (const auto& [r, s] : pats) {
    auto st = classify_pattern(r, s);
    int stars = 0;
    for (size_t j = 0; j < st.size(); ++j) {
      if (st[j] == S::MissingStar) {
        ++stars;
        CHECK(r[j - 1] == 1);
        CHECK(s[j] == 1);
      }
    }
    CHECK(stars <= 1);
  }
  CHECK(admissible_patterns(2).size() == 3);
}

TEST_CASE("csv round trip") {
  auto d = dataset({person("a", {1, 1, 0}, {1, 1, 1}, {0, 1, 0}, 1), person("b", {1, 0, 0}, {1, 1, 0})});
  d.cell_labels = {"low", "high"};
  d.people[0].waves[0].y = 0.1 + 0.2;
  auto csv = format_cohort_csv(d);
  auto back = parse_cohort_csv(csv, format_schema(d));
  CHECK(format_cohort_csv(back) == csv);
  CHECK(back.cell_labels == d.cell_labels);
  CHECK(*back.people[0].waves[0].y == 0.1 + 0.2);
  CHECK(validate_cohort(back).ok());
  CHECK(dataset_hash(back) == dataset_hash(d));
}

TEST_CASE("csv ingestion problems") {
  CHECK_THROWS_AS(parse_cohort_csv("id,wave,y,z,w,r,s\n"), Error);
  CHECK_THROWS_AS(parse_cohort_csv("id,wave,y,z,w,r,s,x0\na,0,1,0,0,1,1\n"), Error);
  auto d = parse_cohort_csv("id,wave,y,z,w,r,s,x0\na,0,1,0,0,1,1,0\na,0,1,0,0,1,1,0\nb,0,1,0,0,1,1,0\nb,1,1,0,0,1,1,0\n");
  auto rep = validate_cohort(d);
  CHECK(has_rule(rep, "duplicate wave record"));
  CHECK(has_rule(rep, "missing wave record"));
}

TEST_CASE("feature layouts follow the factorization") {
  auto y2 = layout_for(Factor::Y, 2, 3);
  CHECK(y2.n_y == 2);
  CHECK(y2.n_z == 3);
  CHECK(y2.n_w == 3);
  CHECK(y2.size() == 11);
  auto y0 = layout_for(Factor::Y, 0, 3);
  CHECK(y0.n_y == 0);
  auto z1 = layout_for(Factor::Z, 1, 2);
  CHECK((z1.n_y == 1 && z1.n_z == 1 && z1.n_w == 2));
  auto s1 = layout_for(Factor::S, 1, 2);
  CHECK((s1.n_y == 1 && s1.n_z == 1 && s1.n_w == 1));
  CHECK_FALSE(is_modeled(Factor::S, 0));
  CHECK_FALSE(is_modeled(Factor::R, 0));
  CHECK_THROWS_AS(layout_for(Factor::R, 0, 2), Error);
  CHECK(y2.names() == std::vector<std::string>{"y0", "y1", "z0", "z1", "z2", "w0", "w1", "w2", "x0=0", "x0=1", "x0=2"});
}

TEST_CASE("encode checks arity and one-hot codes the cell") {
  auto l = layout_for(Factor::Y, 1, 2);
  std::vector<double> y{2.5};
  std::vector<int> z{0, 1}, w{1, 0};
  std::vector<double> out(static_cast<size_t>(l.size()));
  encode(l, HistoryView{y, z, w, 1}, out.data());
  CHECK(out == std::vector<double>{2.5, 0, 1, 1, 0, 0, 1});
  std::vector<double> lag{1.0};
  auto l0 = layout_for(Factor::Y, 0, 2);
  std::vector<int> z0{0}, w0{1};
  CHECK_THROWS_AS(encode(l0, HistoryView{lag, z0, w0, 0}, out.data()), Error);
}

TEST_CASE("model subsets") {
  auto dead1 = person("dead1", {1, 0, 0}, {1, 0, 0});
  auto drop2 = person("drop2", {1, 1, 0}, {1, 1, 1});
  auto full = person("full", {1, 1, 1}, {1, 1, 1});
  auto d = dataset({dead1, drop2, full});

  auto s1 = model_subset(d, Factor::S, 1);
  CHECK(s1.n() == 3);
  CHECK(s1.response[0] == 0.0);

  auto y2 = model_subset(d, Factor::Y, 2);
  CHECK(y2.individuals == std::vector<size_t>{2});

  auto r1 = model_subset(d, Factor::R, 1);
  CHECK(r1.individuals == std::vector<size_t>{1, 2});
  CHECK(r1.response == std::vector<double>{1, 1});
  auto r2 = model_subset(d, Factor::R, 2);
  CHECK(r2.response == std::vector<double>{0, 1});

  for (auto f : {Factor::Y, Factor::W, Factor::S}) {
    size_t prev = SIZE_MAX;
    for (int j = f == Factor::S ? 1 : 0; j < 3; ++j) {
      auto n = model_subset(d, f, j).n();
      CHECK(n <= prev);
      prev = n;
    }
  }
  CHECK(y2.X.cols == static_cast<size_t>(y2.layout.size()));
}

TEST_CASE("empty subset is an unfittable factor") {
  auto d = dataset({person("a", {1, 0}, {1, 0}), person("b", {1, 0}, {1, 0})});
  CHECK_THROWS_WITH(model_subset(d, Factor::Y, 1), doctest::Contains("unfittable factor Y_1"));
  CHECK_THROWS_WITH(model_subset(d, Factor::R, 1), doctest::Contains("unfittable factor R_1"));
}
