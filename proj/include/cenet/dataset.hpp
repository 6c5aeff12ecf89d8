#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cenet {

/// Integer-encoded fact (s, p, o, t); t is a granule index (raw time divided
/// by the dataset granularity).
struct Quadruple {
  std::uint32_t s;
  std::uint32_t p;
  std::uint32_t o;
  std::uint32_t t;

  bool operator==(const Quadruple&) const = default;
};

struct TkgDataset {
  std::vector<Quadruple> train;  // chronologically sorted (stable)
  std::vector<Quadruple> valid;
  std::vector<Quadruple> test;
  std::uint32_t num_entities = 0;
  std::uint32_t num_relations_raw = 0;
  std::uint64_t granularity = 1;
  bool valid_present = false;

  std::uint32_t num_relations_total() const { return 2 * num_relations_raw; }
  std::uint32_t num_granules() const;
};

struct DatasetStats {
  std::size_t train_count = 0;
  std::size_t valid_count = 0;
  std::size_t test_count = 0;
  std::size_t new_events = 0;         // over the training split
  std::size_t repetitive_events = 0;
  double new_event_rate = 0.0;
  std::map<std::uint32_t, std::size_t> per_timestamp_new;  // granule → count
  std::map<std::uint32_t, std::size_t> first_gap_hist;     // gap → count
  std::map<std::uint32_t, std::size_t> latest_gap_hist;
};

/// Parses a tab-separated file of "s p o raw_time [extra]" lines. Raw times
/// must be exact multiples of the granularity; lines that fail to parse
/// raise with their line number. Output is stably sorted by t.
std::vector<Quadruple> parse_quadruple_file(const std::string& path,
                                            std::uint64_t granularity);

/// Appends (o, p+|R_raw|, s, t) for each quadruple; output is re-sorted by t
/// (stable). Subject prediction then reduces to object prediction.
std::vector<Quadruple> add_inverse_quadruples(
    const std::vector<Quadruple>& quads, std::uint32_t num_relations_raw);

/// Reverses add_inverse_quadruples (drops augmented facts, restores order by
/// t). Used by structural tests.
std::vector<Quadruple> strip_inverse_quadruples(
    const std::vector<Quadruple>& quads, std::uint32_t num_relations_raw);

/// Statistics over the raw (pre-augmentation) training split.
DatasetStats compute_stats(const TkgDataset& ds);

/// Loads train/valid/test.txt (valid optional) plus an optional stat.txt of
/// "num_entities num_relations". Granularity 0 means infer it as the gcd of
/// the nonzero raw timestamps across splits.
TkgDataset load_dataset(const std::string& dir, std::uint64_t granularity);

std::string stats_to_json(const TkgDataset& ds, const DatasetStats& st);

}  // namespace cenet
