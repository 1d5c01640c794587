#pragma once
#include <functional>
#include <string>

#include "sace/cohort.hpp"
#include "sace/rng.hpp"

namespace testing {

// Fills a cohort wave by wave, fully observed unless gen says otherwise.
// gen(i, wave, rec, engine) sets y, z, w of the record.
inline sace::CohortDataset full_cohort(size_t n, int waves, int cells, uint64_t seed,
                                       const std::function<void(size_t, int, sace::WaveRecord&, sace::rng::Engine&)>& gen) {
  sace::CohortDataset d;
  d.n_waves = waves;
  d.n_cells = cells;
  d.cell_labels.assign(static_cast<size_t>(cells), "");
  sace::rng::Engine e(seed);
  for (size_t i = 0; i < n; ++i) {
    sace::Individual p;
    p.id = "i" + std::to_string(i);
    p.x0 = static_cast<int>(i % static_cast<size_t>(cells));
    p.waves.resize(static_cast<size_t>(waves));
    for (int j = 0; j < waves; ++j) {
      auto& rec = p.waves[static_cast<size_t>(j)];
      rec.y = 0.0;
      rec.z = 0;
      rec.w = 0;
      gen(i, j, rec, e);
    }
    // keep exposure monotone
    for (int j = 1; j < waves; ++j)
      if (p.waves[static_cast<size_t>(j - 1)].z.value_or(0) == 1 && p.waves[static_cast<size_t>(j)].z)
        p.waves[static_cast<size_t>(j)].z = 1;
    p.waves[0].z = 0;
    d.people.push_back(std::move(p));
  }
  return d;
}

inline std::string temp_dir(const std::string& name) {
  return std::string(SACE_TEST_TMP) + "/" + name;
}

}  // namespace testing
