#include "cenet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

#include <json.hpp>

namespace cenet {

namespace {

struct RawLine {
  std::uint64_t fields[4];
};

bool parse_line(const std::string& line, RawLine& out) {
  const char* p = line.c_str();
  const char* end = p + line.size();
  for (int f = 0; f < 4; ++f) {
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
    auto [next, ec] = std::from_chars(p, end, out.fields[f]);
    if (ec != std::errc() || next == p) return false;
    p = next;
  }
  return true;  // trailing columns ignored
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

std::vector<RawLine> read_raw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::vector<RawLine> lines;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    RawLine rl;
    if (!parse_line(line, rl)) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": malformed quadruple line");
    }
    lines.push_back(rl);
  }
  return lines;
}

std::vector<Quadruple> to_quadruples(const std::vector<RawLine>& lines,
                                     std::uint64_t granularity,
                                     const std::string& path) {
  std::vector<Quadruple> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& f = lines[i].fields;
    if (f[3] % granularity != 0) {
      throw std::runtime_error(
          path + ": raw time " + std::to_string(f[3]) +
          " not divisible by granularity " + std::to_string(granularity));
    }
    out.push_back({static_cast<std::uint32_t>(f[0]),
                   static_cast<std::uint32_t>(f[1]),
                   static_cast<std::uint32_t>(f[2]),
                   static_cast<std::uint32_t>(f[3] / granularity)});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Quadruple& a, const Quadruple& b) {
                     return a.t < b.t;
                   });
  return out;
}

}  // namespace

std::uint32_t TkgDataset::num_granules() const {
  std::uint32_t mx = 0;
  bool any = false;
  for (const auto* split : {&train, &valid, &test}) {
    for (const auto& q : *split) {
      mx = std::max(mx, q.t);
      any = true;
    }
  }
  return any ? mx + 1 : 0;
}

std::vector<Quadruple> parse_quadruple_file(const std::string& path,
                                            std::uint64_t granularity) {
  if (granularity == 0)
    throw std::invalid_argument("parse_quadruple_file: granularity must be > 0");
  return to_quadruples(read_raw(path), granularity, path);
}

std::vector<Quadruple> add_inverse_quadruples(
    const std::vector<Quadruple>& quads, std::uint32_t num_relations_raw) {
  std::vector<Quadruple> out;
  out.reserve(quads.size() * 2);
  for (const auto& q : quads) {
    if (q.p >= num_relations_raw) {
      throw std::invalid_argument(
          "add_inverse_quadruples: relation id " + std::to_string(q.p) +
          " >= |R_raw| " + std::to_string(num_relations_raw));
    }
    out.push_back(q);
    out.push_back({q.o, q.p + num_relations_raw, q.s, q.t});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Quadruple& a, const Quadruple& b) {
                     return a.t < b.t;
                   });
  return out;
}

std::vector<Quadruple> strip_inverse_quadruples(
    const std::vector<Quadruple>& quads, std::uint32_t num_relations_raw) {
  std::vector<Quadruple> out;
  for (const auto& q : quads) {
    if (q.p < num_relations_raw) out.push_back(q);
  }
  return out;
}

DatasetStats compute_stats(const TkgDataset& ds) {
  DatasetStats st;
  st.train_count = ds.train.size();
  st.valid_count = ds.valid.size();
  st.test_count = ds.test.size();

  struct Seen {
    std::uint32_t first_t;
    std::uint32_t last_t;
  };
  std::unordered_map<std::uint64_t, Seen> seen;  // keyed on (s,p,o)
  const auto key = [&](const Quadruple& q) {
    return (static_cast<std::uint64_t>(q.s) * ds.num_relations_raw + q.p) *
               ds.num_entities +
           q.o;
  };

  // granule-batched sweep so same-granule duplicates do not see each other
  std::size_t i = 0;
  while (i < ds.train.size()) {
    std::size_t j = i;
    const std::uint32_t t = ds.train[i].t;
    while (j < ds.train.size() && ds.train[j].t == t) ++j;
    for (std::size_t k = i; k < j; ++k) {
      const auto it = seen.find(key(ds.train[k]));
      if (it == seen.end()) {
        ++st.new_events;
        ++st.per_timestamp_new[t];
      } else {
        ++st.repetitive_events;
        ++st.first_gap_hist[t - it->second.first_t];
        ++st.latest_gap_hist[t - it->second.last_t];
      }
    }
    for (std::size_t k = i; k < j; ++k) {
      auto [it, inserted] = seen.try_emplace(key(ds.train[k]), Seen{t, t});
      if (!inserted) it->second.last_t = t;
    }
    i = j;
  }
  if (st.train_count > 0) {
    st.new_event_rate =
        static_cast<double>(st.new_events) / static_cast<double>(st.train_count);
  }
  return st;
}

TkgDataset load_dataset(const std::string& dir, std::uint64_t granularity) {
  namespace fs = std::filesystem;
  const auto train_path = (fs::path(dir) / "train.txt").string();
  const auto valid_path = (fs::path(dir) / "valid.txt").string();
  const auto test_path = (fs::path(dir) / "test.txt").string();
  if (!fs::exists(train_path))
    throw std::runtime_error("missing dataset file: " + train_path);
  if (!fs::exists(test_path))
    throw std::runtime_error("missing dataset file: " + test_path);

  auto train_raw = read_raw(train_path);
  auto test_raw = read_raw(test_path);
  std::vector<RawLine> valid_raw;
  const bool has_valid = fs::exists(valid_path);
  if (has_valid) valid_raw = read_raw(valid_path);

  if (granularity == 0) {
    std::uint64_t g = 0;
    for (const auto* raw : {&train_raw, &valid_raw, &test_raw}) {
      for (const auto& l : *raw) g = std::gcd(g, l.fields[3]);
    }
    granularity = g == 0 ? 1 : g;
  }

  TkgDataset ds;
  ds.granularity = granularity;
  ds.valid_present = has_valid;
  ds.train = to_quadruples(train_raw, granularity, train_path);
  ds.test = to_quadruples(test_raw, granularity, test_path);
  if (has_valid) ds.valid = to_quadruples(valid_raw, granularity, valid_path);

  // vocabulary from stat.txt when shipped, else max id + 1
  const auto stat_path = (fs::path(dir) / "stat.txt").string();
  if (fs::exists(stat_path)) {
    std::ifstream in(stat_path);
    std::uint64_t ne = 0, nr = 0;
    if (!(in >> ne >> nr))
      throw std::runtime_error("malformed stat file: " + stat_path);
    ds.num_entities = static_cast<std::uint32_t>(ne);
    ds.num_relations_raw = static_cast<std::uint32_t>(nr);
  } else {
    std::uint32_t max_e = 0, max_r = 0;
    for (const auto* split : {&ds.train, &ds.valid, &ds.test}) {
      for (const auto& q : *split) {
        max_e = std::max({max_e, q.s, q.o});
        max_r = std::max(max_r, q.p);
      }
    }
    ds.num_entities = max_e + 1;
    ds.num_relations_raw = max_r + 1;
  }
  for (const auto* split : {&ds.train, &ds.valid, &ds.test}) {
    for (const auto& q : *split) {
      if (q.s >= ds.num_entities || q.o >= ds.num_entities ||
          q.p >= ds.num_relations_raw) {
        throw std::runtime_error(
            "dataset id outside declared vocabulary (entities=" +
            std::to_string(ds.num_entities) +
            ", relations=" + std::to_string(ds.num_relations_raw) + ")");
      }
    }
  }
  if (!ds.train.empty() && !ds.test.empty() &&
      ds.train.back().t >= ds.test.front().t) {
    throw std::runtime_error(
        "dataset violates the extrapolation split: max(train.t) must be "
        "below min(test.t)");
  }
  return ds;
}

std::string stats_to_json(const TkgDataset& ds, const DatasetStats& st) {
  nlohmann::json j;
  j["counts"] = {{"train", st.train_count},
                 {"valid", st.valid_count},
                 {"test", st.test_count}};
  j["num_entities"] = ds.num_entities;
  j["num_relations"] = ds.num_relations_raw;
  j["num_granules"] = ds.num_granules();
  j["granularity"] = ds.granularity;
  j["new_event_rate"] = st.new_event_rate;
  auto per_ts = nlohmann::json::array();
  for (const auto& [t, c] : st.per_timestamp_new) per_ts.push_back({t, c});
  j["per_timestamp_new_counts"] = per_ts;
  auto first_hist = nlohmann::json::array();
  for (const auto& [g, c] : st.first_gap_hist) first_hist.push_back({g, c});
  j["first_gap_hist"] = first_hist;
  auto latest_hist = nlohmann::json::array();
  for (const auto& [g, c] : st.latest_gap_hist) latest_hist.push_back({g, c});
  j["latest_gap_hist"] = latest_hist;
  return j.dump(2);
}

}  // namespace cenet
