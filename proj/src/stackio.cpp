#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sace/error.hpp"
#include "sace/obsmodels.hpp"

namespace sace {

using nlohmann::json;

namespace {
std::string factor_file(const FactorDraws& fd) {
  return std::string(factor_name(fd.factor)) + "_" + std::to_string(fd.wave) + ".forest";
}
}  // namespace

void save_stack(const BartStack& st, const std::string& dir, uint64_t data_hash, const std::string& config_text) {
  ensure_dir(dir);
  json man;
  man["format"] = "sace-stack-1";
  man["dataset_hash"] = hex64(data_hash);
  man["config_hash"] = hex64(fnv1a(config_text));
  man["config"] = config_text;
  man["waves"] = st.waves;
  man["cells"] = st.cells;
  man["chains"] = st.chains;
  man["keep"] = st.keep;
  man["warnings"] = st.notes;
  json facs = json::array();
  for (const auto& fd : st.factors) {
    std::ostringstream out;
    for (int c = 0; c < st.chains; ++c)
      for (int m = 0; m < st.keep; ++m) {
        out << "draw " << c << ' ' << m << '\n';
        bart::write_forest(out, fd.chains[static_cast<size_t>(c)][static_cast<size_t>(m)]);
      }
    write_file(dir + "/" + factor_file(fd), out.str());
    std::vector<std::string> seeds;
    for (auto s : fd.seeds) seeds.push_back(hex64(s));
    facs.push_back({{"factor", factor_name(fd.factor)},
                    {"wave", fd.wave},
                    {"features", fd.layout.names()},
                    {"file", factor_file(fd)},
                    {"seeds", seeds}});
  }
  man["factors"] = facs;

  std::string base;
  for (int c = 0; c < st.chains; ++c)
    for (int m = 0; m < st.keep; ++m)
      base += std::to_string(c) + ' ' + std::to_string(m) + ' ' +
              join_doubles(st.baseline_draws[static_cast<size_t>(c)][static_cast<size_t>(m)]) + '\n';
  write_file(dir + "/baseline.txt", base);
  man["baseline_file"] = "baseline.txt";
  write_file(dir + "/manifest.json", man.dump(2) + "\n");
}

BartStack load_stack(const std::string& dir, uint64_t expect_hash, std::string* config_text) {
  json man;
  try {
    man = json::parse(read_file(dir + "/manifest.json"));
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("bad stack manifest: ") + e.what());
  }
  try {
    if (man.at("format") != "sace-stack-1") fail(ErrorKind::Parse, "unknown stack format");
    if (man.at("dataset_hash").get<std::string>() != hex64(expect_hash))
      fail(ErrorKind::Mismatch, "stack manifest hash mismatch: stack was fit on a different dataset");
    BartStack st;
    st.waves = man.at("waves").get<int>();
    st.cells = man.at("cells").get<int>();
    st.chains = man.at("chains").get<int>();
    st.keep = man.at("keep").get<int>();
    st.notes = man.at("warnings").get<std::vector<std::string>>();
    if (config_text) *config_text = man.at("config").get<std::string>();
    for (const auto& f : man.at("factors")) {
      FactorDraws fd;
      fd.factor = parse_factor(f.at("factor").get<std::string>());
      fd.wave = f.at("wave").get<int>();
      fd.layout = layout_for(fd.factor, fd.wave, st.cells);
      if (f.at("features").get<std::vector<std::string>>() != fd.layout.names())
        fail(ErrorKind::Mismatch, "stack feature layout differs from current layout");
      for (const auto& s : f.at("seeds")) fd.seeds.push_back(std::stoull(s.get<std::string>(), nullptr, 16));
      std::istringstream in(read_file(dir + "/" + f.at("file").get<std::string>()));
      fd.chains.resize(static_cast<size_t>(st.chains));
      for (int c = 0; c < st.chains; ++c)
        for (int m = 0; m < st.keep; ++m) {
          std::string tag;
          int cc = -1, mm = -1;
          in >> tag >> cc >> mm;
          if (tag != "draw" || cc != c || mm != m) fail(ErrorKind::Parse, "forest file out of order");
          auto d = bart::read_forest(in);
          if (d.n_features != fd.layout.size()) fail(ErrorKind::Parse, "forest arity differs from layout");
          fd.chains[static_cast<size_t>(c)].push_back(std::move(d));
        }
      st.factors.push_back(std::move(fd));
    }
    std::istringstream bin(read_file(dir + "/" + man.at("baseline_file").get<std::string>()));
    st.baseline_draws.resize(static_cast<size_t>(st.chains));
    for (int c = 0; c < st.chains; ++c)
      for (int m = 0; m < st.keep; ++m) {
        int cc = -1, mm = -1;
        std::string vals;
        bin >> cc >> mm >> vals;
        if (cc != c || mm != m) fail(ErrorKind::Parse, "baseline file out of order");
        st.baseline_draws[static_cast<size_t>(c)].push_back(parse_double_list(vals, "baseline probabilities"));
      }
    st.index();
    return st;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("bad stack manifest: ") + e.what());
  }
}

}  // namespace sace
