#include "sace/cohort.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <sstream>
#include <unordered_map>

#include "sace/error.hpp"

namespace sace {

const char* factor_name(Factor f) {
  switch (f) {
    case Factor::Y: return "Y";
    case Factor::Z: return "Z";
    case Factor::W: return "W";
    case Factor::R: return "R";
    case Factor::S: return "S";
  }
  return "?";
}

Factor parse_factor(std::string_view s) {
  if (s == "Y") return Factor::Y;
  if (s == "Z") return Factor::Z;
  if (s == "W") return Factor::W;
  if (s == "R") return Factor::R;
  if (s == "S") return Factor::S;
  fail(ErrorKind::Parse, "unknown factor '" + std::string(s) + "'");
}

std::string ValidationReport::to_text() const {
  std::string out;
  for (const auto& v : items) out += v.id + "," + std::to_string(v.wave) + "," + v.rule + "\n";
  return out;
}

namespace {

bool binary(int v) { return v == 0 || v == 1; }

void check_individual(const Individual& p, int n_cells, std::vector<Violation>& out) {
  auto add = [&](int wave, const char* rule) { out.push_back({p.id, wave, rule}); };
  if (p.x0 < 0 || p.x0 >= n_cells) add(-1, "baseline cell out of range");

  int last_z = 0;
  for (size_t j = 0; j < p.waves.size(); ++j) {
    const auto& rec = p.waves[j];
    int wave = static_cast<int>(j);
    bool r_ok = binary(rec.r), s_ok = binary(rec.s);
    if (!r_ok) add(wave, "non-binary r");
    if (!s_ok) add(wave, "non-binary s");
    if (rec.z && !binary(*rec.z)) add(wave, "non-binary z");
    if (rec.w && !binary(*rec.w)) add(wave, "non-binary w");

    if (j == 0) {
      if (rec.r != 1) add(wave, "baseline not retained");
      if (rec.s != 1) add(wave, "baseline not alive");
      if (rec.z && *rec.z != 0) add(wave, "nonzero baseline exposure");
    } else {
      const auto& prev = p.waves[j - 1];
      if (r_ok && prev.r == 0 && rec.r == 1) add(wave, "non-monotone retention");
      if (s_ok && prev.s == 0 && rec.s == 1) add(wave, "non-monotone survival");
    }
    if (rec.r == 1 && rec.s == 0) add(wave, "participation after death");

    bool observed = rec.r == 1 && rec.s == 1;
    bool any = rec.y || rec.z || rec.w;
    bool all = rec.y && rec.z && rec.w;
    if (observed && !all) add(wave, "value absent while observed");
    if (!observed && any) add(wave, "value present while unobserved");

    if (rec.z && binary(*rec.z)) {
      if (*rec.z < last_z) add(wave, "non-monotone exposure");
      last_z = std::max(last_z, *rec.z);
    }
  }
}

}  // namespace

ValidationReport validate_cohort(const CohortDataset& data) {
  ValidationReport rep;
  rep.items = data.ingest;
  if (data.n_waves < 1) rep.items.push_back({"", -1, "no waves"});
  for (const auto& p : data.people) check_individual(p, data.n_cells, rep.items);
  return rep;
}

void require_valid(const CohortDataset& data) {
  auto rep = validate_cohort(data);
  if (rep.ok()) return;
  std::string msg = "dataset failed validation (" + std::to_string(rep.items.size()) + " violations):";
  for (size_t i = 0; i < rep.items.size() && i < 5; ++i)
    msg += " [" + rep.items[i].id + "," + std::to_string(rep.items[i].wave) + "," + rep.items[i].rule + "]";
  fail(ErrorKind::Validation, msg);
}

CohortDataset parse_cohort_csv(std::string_view text, std::string_view schema_text) {
  CohortDataset data;
  int schema_waves = -1, schema_cells = -1;
  std::map<int, std::string> labels;

  std::istringstream sin{std::string(schema_text)};
  std::string line;
  while (std::getline(sin, line)) {
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string_view::npos) fail(ErrorKind::Parse, "schema line without '=': " + std::string(t));
    auto key = trim(t.substr(0, eq)), val = trim(t.substr(eq + 1));
    if (key == "waves") schema_waves = static_cast<int>(parse_int(val, "schema waves"));
    else if (key == "cells") schema_cells = static_cast<int>(parse_int(val, "schema cells"));
    else if (key.starts_with("cell.")) labels[static_cast<int>(parse_int(key.substr(5), "schema cell index"))] = std::string(val);
    else fail(ErrorKind::Parse, "unknown schema key '" + std::string(key) + "'");
  }

  std::istringstream in{std::string(text)};
  if (!std::getline(in, line)) fail(ErrorKind::Parse, "empty cohort file");
  auto header = split(trim(line), ',');
  std::array<int, 8> col;
  col.fill(-1);
  const std::array<std::string_view, 8> names = {"id", "wave", "y", "z", "w", "r", "s", "x0"};
  for (size_t c = 0; c < header.size(); ++c) {
    auto h = trim(header[c]);
    for (size_t k = 0; k < names.size(); ++k)
      if (h == names[k]) col[k] = static_cast<int>(c);
  }
  for (size_t k = 0; k < names.size(); ++k)
    if (col[k] < 0) fail(ErrorKind::Parse, "missing column '" + std::string(names[k]) + "'");

  struct Row {
    int wave;
    WaveRecord rec;
    int x0;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Row>> rows;
  int max_wave = -1, max_cell = -1;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty()) continue;
    auto f = split(t, ',');
    if (f.size() != header.size())
      fail(ErrorKind::Parse, "line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " fields");
    auto field = [&](int k) { return trim(f[static_cast<size_t>(col[static_cast<size_t>(k)])]); };
    std::string ctx = "line " + std::to_string(lineno);
    Row row;
    std::string id(field(0));
    if (id.empty()) fail(ErrorKind::Parse, ctx + ": empty id");
    row.wave = static_cast<int>(parse_int(field(1), ctx + " wave"));
    if (!field(2).empty()) row.rec.y = parse_double(field(2), ctx + " y");
    if (!field(3).empty()) row.rec.z = static_cast<int>(parse_int(field(3), ctx + " z"));
    if (!field(4).empty()) row.rec.w = static_cast<int>(parse_int(field(4), ctx + " w"));
    row.rec.r = static_cast<int>(parse_int(field(5), ctx + " r"));
    row.rec.s = static_cast<int>(parse_int(field(6), ctx + " s"));
    row.x0 = static_cast<int>(parse_int(field(7), ctx + " x0"));
    max_wave = std::max(max_wave, row.wave);
    max_cell = std::max(max_cell, row.x0);
    auto it = rows.find(id);
    if (it == rows.end()) {
      order.push_back(id);
      it = rows.emplace(id, std::vector<Row>{}).first;
    }
    it->second.push_back(row);
  }

  data.n_waves = schema_waves > 0 ? schema_waves : max_wave + 1;
  data.n_cells = schema_cells > 0 ? schema_cells : std::max(1, max_cell + 1);
  data.cell_labels.resize(static_cast<size_t>(data.n_cells));
  for (auto& [k, v] : labels)
    if (k >= 0 && k < data.n_cells) data.cell_labels[static_cast<size_t>(k)] = v;

  for (const auto& id : order) {
    Individual p;
    p.id = id;
    auto& rs = rows[id];
    p.x0 = rs.front().x0;
    std::vector<int> seen(static_cast<size_t>(std::max(data.n_waves, 0)), 0);
    p.waves.assign(seen.size(), WaveRecord{});
    for (const auto& row : rs) {
      if (row.x0 != p.x0) data.ingest.push_back({id, row.wave, "inconsistent baseline cell"});
      if (row.wave < 0 || row.wave >= data.n_waves) {
        data.ingest.push_back({id, row.wave, "wave out of range"});
        continue;
      }
      auto w = static_cast<size_t>(row.wave);
      if (seen[w]++) {
        data.ingest.push_back({id, row.wave, "duplicate wave record"});
        continue;
      }
      p.waves[w] = row.rec;
    }
    for (size_t w = 0; w < seen.size(); ++w)
      if (!seen[w]) data.ingest.push_back({id, static_cast<int>(w), "missing wave record"});
    data.people.push_back(std::move(p));
  }
  return data;
}

std::string format_cohort_csv(const CohortDataset& data) {
  std::string out = "id,wave,y,z,w,r,s,x0\n";
  for (const auto& p : data.people) {
    for (size_t j = 0; j < p.waves.size(); ++j) {
      const auto& rec = p.waves[j];
      out += p.id;
      out += ',' + std::to_string(j) + ',';
      if (rec.y) out += fmt_double(*rec.y);
      out += ',';
      if (rec.z) out += std::to_string(*rec.z);
      out += ',';
      if (rec.w) out += std::to_string(*rec.w);
      out += ',' + std::to_string(rec.r) + ',' + std::to_string(rec.s) + ',' + std::to_string(p.x0) + '\n';
    }
  }
  return out;
}

std::string format_schema(const CohortDataset& data) {
  std::string out = "waves=" + std::to_string(data.n_waves) + "\ncells=" + std::to_string(data.n_cells) + "\n";
  for (size_t k = 0; k < data.cell_labels.size(); ++k)
    if (!data.cell_labels[k].empty()) out += "cell." + std::to_string(k) + "=" + data.cell_labels[k] + "\n";
  return out;
}

CohortDataset read_cohort(const std::string& csv_path, const std::string& schema_path) {
  std::string schema;
  if (!schema_path.empty()) {
    schema = read_file(schema_path);
  } else {
    try {
      schema = read_file(csv_path + ".schema");
    } catch (const Error&) {
      // no sidecar: layout inferred from the rows
    }
  }
  return parse_cohort_csv(read_file(csv_path), schema);
}

void write_cohort(const CohortDataset& data, const std::string& csv_path) {
  write_file(csv_path, format_cohort_csv(data));
  write_file(csv_path + ".schema", format_schema(data));
}

uint64_t dataset_hash(const CohortDataset& data) {
  return fnv1a(format_cohort_csv(data), fnv1a(format_schema(data)));
}

const char* status_code(OutcomeStatus s) {
  switch (s) {
    case OutcomeStatus::Observed: return "O";
    case OutcomeStatus::Missing: return "M";
    case OutcomeStatus::MissingStar: return "M*";
    case OutcomeStatus::TruncatedByDeath: return "nd";
  }
  return "?";
}

std::vector<OutcomeStatus> classify_pattern(std::span<const int> r, std::span<const int> s) {
  auto reject = [] { fail(ErrorKind::Validation, "pattern not in Table 1"); };
  if (r.size() != s.size() || r.empty()) reject();
  for (size_t j = 0; j < r.size(); ++j) {
    if (!binary(r[j]) || !binary(s[j])) reject();
    if (r[j] > s[j]) reject();
    if (j > 0 && (r[j] > r[j - 1] || s[j] > s[j - 1])) reject();
  }
  if (r[0] != 1 || s[0] != 1) reject();

  std::vector<OutcomeStatus> out(r.size());
  for (size_t j = 0; j < r.size(); ++j) {
    if (s[j] == 0) out[j] = OutcomeStatus::TruncatedByDeath;
    else if (r[j] == 1) out[j] = OutcomeStatus::Observed;
    else if (r[j - 1] == 1) out[j] = OutcomeStatus::MissingStar;
    else out[j] = OutcomeStatus::Missing;
  }
  return out;
}

std::vector<std::pair<std::vector<int>, std::vector<int>>> admissible_patterns(int n_waves) {
  std::vector<std::pair<std::vector<int>, std::vector<int>>> out;
  if (n_waves < 1 || n_waves > 12) fail(ErrorKind::InvalidArgument, "pattern enumeration needs 1..12 waves");
  unsigned total = 1u << n_waves;
  for (unsigned rb = 0; rb < total; ++rb) {
    for (unsigned sb = 0; sb < total; ++sb) {
      std::vector<int> r(static_cast<size_t>(n_waves)), s(static_cast<size_t>(n_waves));
      for (int j = 0; j < n_waves; ++j) {
        r[static_cast<size_t>(j)] = (rb >> j) & 1;
        s[static_cast<size_t>(j)] = (sb >> j) & 1;
      }
      try {
        classify_pattern(r, s);
        out.emplace_back(std::move(r), std::move(s));
      } catch (const Error&) {
      }
    }
  }
  return out;
}

std::vector<std::string> FeatureLayout::names() const {
  std::vector<std::string> out;
  for (int k = 0; k < n_y; ++k) out.push_back("y" + std::to_string(k));
  for (int k = 0; k < n_z; ++k) out.push_back("z" + std::to_string(k));
  for (int k = 0; k < n_w; ++k) out.push_back("w" + std::to_string(k));
  for (int c = 0; c < n_cells; ++c) out.push_back("x0=" + std::to_string(c));
  return out;
}

bool is_modeled(Factor f, int wave) {
  if (wave < 0) return false;
  if (f == Factor::Y || f == Factor::W) return true;
  return wave >= 1;  // r_0 = s_0 = 1 and z_0 = 0 by construction
}

FeatureLayout layout_for(Factor f, int wave, int n_cells) {
  if (!is_modeled(f, wave))
    fail(ErrorKind::InvalidArgument, std::string("factor ") + factor_name(f) + "_" + std::to_string(wave) + " is not modeled");
  FeatureLayout l;
  l.factor = f;
  l.wave = wave;
  l.n_cells = n_cells;
  l.n_y = wave;
  switch (f) {
    case Factor::Y: l.n_z = wave + 1; l.n_w = wave + 1; break;
    case Factor::Z: l.n_z = wave; l.n_w = wave + 1; break;
    case Factor::W:
    case Factor::R:
    case Factor::S: l.n_z = wave; l.n_w = wave; break;
  }
  return l;
}

void encode(const FeatureLayout& l, const HistoryView& h, double* out) {
  if (static_cast<int>(h.y.size()) != l.n_y || static_cast<int>(h.z.size()) != l.n_z ||
      static_cast<int>(h.w.size()) != l.n_w)
    fail(ErrorKind::InvalidArgument, std::string("history arity mismatch for ") + factor_name(l.factor) + "_" +
                                         std::to_string(l.wave));
  if (h.x0 < 0 || h.x0 >= l.n_cells) fail(ErrorKind::InvalidArgument, "baseline cell out of range");
  double* p = out;
  for (double v : h.y) *p++ = v;
  for (int v : h.z) *p++ = v;
  for (int v : h.w) *p++ = v;
  for (int c = 0; c < l.n_cells; ++c) *p++ = c == h.x0 ? 1.0 : 0.0;
}

ModelSubset model_subset(const CohortDataset& data, Factor f, int wave) {
  if (wave < 0 || wave > data.last_wave()) fail(ErrorKind::InvalidArgument, "wave out of range");
  ModelSubset sub;
  sub.layout = layout_for(f, wave, data.n_cells);
  const auto& l = sub.layout;
  auto retained_through = [](const Individual& p, int j) {
    for (int k = 0; k <= j; ++k)
      if (p.waves[static_cast<size_t>(k)].r != 1 || p.waves[static_cast<size_t>(k)].s != 1) return false;
    return true;
  };

  std::vector<double> feats(static_cast<size_t>(l.size()));
  std::vector<double> ys;
  std::vector<int> zs, ws;
  std::vector<double> xbuf;
  for (size_t i = 0; i < data.people.size(); ++i) {
    const auto& p = data.people[i];
    bool in = false;
    double resp = 0;
    const auto& cur = p.waves[static_cast<size_t>(wave)];
    switch (f) {
      case Factor::Y:
      case Factor::Z:
      case Factor::W:
        in = retained_through(p, wave);
        if (in) {
          bool present = f == Factor::Y ? cur.y.has_value() : f == Factor::Z ? cur.z.has_value() : cur.w.has_value();
          if (!present) fail(ErrorKind::Validation, "absent value for observed record " + p.id);
          resp = f == Factor::Y ? *cur.y : f == Factor::Z ? *cur.z : *cur.w;
        }
        break;
      case Factor::R:
        in = retained_through(p, wave - 1) && cur.s == 1;
        resp = cur.r;
        break;
      case Factor::S:
        in = retained_through(p, wave - 1);
        resp = cur.s;
        break;
    }
    if (!in) continue;
    ys.clear();
    zs.clear();
    ws.clear();
    for (int k = 0; k < l.n_y; ++k) ys.push_back(p.waves[static_cast<size_t>(k)].y.value_or(0.0));
    for (int k = 0; k < l.n_z; ++k) zs.push_back(p.waves[static_cast<size_t>(k)].z.value_or(0));
    for (int k = 0; k < l.n_w; ++k) ws.push_back(p.waves[static_cast<size_t>(k)].w.value_or(0));
    encode(l, HistoryView{ys, zs, ws, p.x0}, feats.data());
    xbuf.insert(xbuf.end(), feats.begin(), feats.end());
    sub.response.push_back(resp);
    sub.individuals.push_back(i);
  }
  if (sub.response.empty())
    fail(ErrorKind::Runtime, std::string("unfittable factor ") + factor_name(f) + "_" + std::to_string(wave) +
                                 ": empty fitting subset");
  sub.X.rows = sub.response.size();
  sub.X.cols = static_cast<size_t>(l.size());
  sub.X.data = std::move(xbuf);
  return sub;
}

}  // namespace sace
