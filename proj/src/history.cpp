#include "cenet/history.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace cenet {

bool QueryContext::in_history(std::uint32_t o) const {
  auto it = std::lower_bound(
      freq.begin(), freq.end(), o,
      [](const auto& pair, std::uint32_t id) { return pair.first < id; });
  return it != freq.end() && it->first == o && it->second > 0.0;
}

void HistorySweep::absorb(const std::vector<Quadruple>& quads) {
  for (const auto& q : quads) {
    ++counts_[key(q.s, q.p)][q.o];
    cursor_ = std::max(cursor_, static_cast<std::int64_t>(q.t));
  }
}

ad::SparseVec HistorySweep::lookup(std::uint32_t s, std::uint32_t p) const {
  ad::SparseVec out;
  auto it = counts_.find(key(s, p));
  if (it == counts_.end()) return out;
  out.reserve(it->second.size());
  for (const auto& [o, c] : it->second) {
    out.emplace_back(o, static_cast<double>(c));
  }
  return out;
}

std::vector<QueryContext> HistorySweep::build(
    const std::vector<Quadruple>& quads) {
  std::vector<QueryContext> out;
  out.reserve(quads.size());
  std::size_t i = 0;
  while (i < quads.size()) {
    const std::uint32_t t = quads[i].t;
    if (static_cast<std::int64_t>(t) <= cursor_) {
      throw std::invalid_argument(
          "HistorySweep::build: quadruples not sorted past the absorbed "
          "cursor (t=" + std::to_string(t) + ")");
    }
    std::size_t j = i;
    while (j < quads.size() && quads[j].t == t) ++j;
    // emit before absorbing: events at the query's own granule are unseen
    for (std::size_t k = i; k < j; ++k) {
      const auto& q = quads[k];
      QueryContext ctx{q.s, q.p, q.o, q.t, lookup(q.s, q.p), false};
      ctx.label = ctx.in_history(q.o);
      out.push_back(std::move(ctx));
    }
    for (std::size_t k = i; k < j; ++k) {
      ++counts_[key(quads[k].s, quads[k].p)][quads[k].o];
    }
    cursor_ = t;
    i = j;
  }
  return out;
}

Tensor clamp_to_z(const ad::SparseVec& freq, double lambda,
                  std::size_t num_entities) {
  if (lambda <= 0.0)
    throw std::invalid_argument("clamp_to_z: lambda must be positive");
  Tensor z({num_entities});
  z.fill(-lambda);
  for (const auto& [o, f] : freq) {
    if (f > 0.0) z[o] = lambda;
  }
  return z;
}

std::vector<QueryContext> build_split_contexts(const TkgDataset& ds,
                                               const std::string& split_name) {
  HistorySweep sweep(ds.num_relations_total());
  const auto train = add_inverse_quadruples(ds.train, ds.num_relations_raw);
  const auto valid = add_inverse_quadruples(ds.valid, ds.num_relations_raw);
  const auto test = add_inverse_quadruples(ds.test, ds.num_relations_raw);
  if (split_name == "train") return sweep.build(train);
  if (split_name == "valid") {
    sweep.absorb(train);
    return sweep.build(valid);
  }
  if (split_name == "test") {
    sweep.absorb(train);
    sweep.absorb(valid);
    return sweep.build(test);
  }
  throw std::invalid_argument("unknown split: " + split_name);
}

std::uint64_t dataset_content_hash(const std::vector<Quadruple>& quads) {
  // FNV-1a over the raw fields
  std::uint64_t h = 1469598103934665603ULL;
  const auto mix = [&h](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& q : quads) {
    mix(q.s);
    mix(q.p);
    mix(q.o);
    mix(q.t);
  }
  return h;
}

namespace {

constexpr char kCacheMagic[8] = {'C', 'E', 'N', 'H', 'C', 'A', 'C', '1'};

void put_varint(std::string& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<char>((v & 0x7f) | 0x80));
    v >>= 7;
  }
  out.push_back(static_cast<char>(v));
}

bool get_varint(const std::string& in, std::size_t& pos, std::uint64_t& v) {
  v = 0;
  int shift = 0;
  while (pos < in.size()) {
    const auto byte = static_cast<unsigned char>(in[pos++]);
    v |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
    if ((byte & 0x80) == 0) return true;
    shift += 7;
    if (shift > 63) return false;
  }
  return false;
}

}  // namespace

void save_context_cache(const std::string& path,
                        const std::vector<QueryContext>& ctxs,
                        std::uint64_t dataset_hash) {
  std::string buf;
  buf.append(kCacheMagic, sizeof(kCacheMagic));
  put_varint(buf, dataset_hash);
  put_varint(buf, ctxs.size());
  for (const auto& c : ctxs) {
    put_varint(buf, c.s);
    put_varint(buf, c.p);
    put_varint(buf, c.true_o);
    put_varint(buf, c.t);
    put_varint(buf, c.label ? 1 : 0);
    put_varint(buf, c.freq.size());
    std::uint32_t prev = 0;
    for (const auto& [o, f] : c.freq) {
      put_varint(buf, o - prev);  // delta, ids are sorted
      put_varint(buf, static_cast<std::uint64_t>(f));
      prev = o;
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write context cache: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::optional<std::vector<QueryContext>> load_context_cache(
    const std::string& path, std::uint64_t dataset_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kCacheMagic) ||
      buf.compare(0, sizeof(kCacheMagic), kCacheMagic, sizeof(kCacheMagic)) !=
          0) {
    return std::nullopt;
  }
  std::size_t pos = sizeof(kCacheMagic);
  std::uint64_t hash = 0, count = 0;
  if (!get_varint(buf, pos, hash) || hash != dataset_hash) return std::nullopt;
  if (!get_varint(buf, pos, count)) return std::nullopt;
  std::vector<QueryContext> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t s, p, o, t, label, nnz;
    if (!get_varint(buf, pos, s) || !get_varint(buf, pos, p) ||
        !get_varint(buf, pos, o) || !get_varint(buf, pos, t) ||
        !get_varint(buf, pos, label) || !get_varint(buf, pos, nnz)) {
      return std::nullopt;
    }
    QueryContext ctx{static_cast<std::uint32_t>(s),
                     static_cast<std::uint32_t>(p),
                     static_cast<std::uint32_t>(o),
                     static_cast<std::uint32_t>(t),
                     {},
                     label != 0};
    std::uint32_t prev = 0;
    for (std::uint64_t k = 0; k < nnz; ++k) {
      std::uint64_t delta, f;
      if (!get_varint(buf, pos, delta) || !get_varint(buf, pos, f)) {
        return std::nullopt;
      }
      prev += static_cast<std::uint32_t>(delta);
      ctx.freq.emplace_back(prev, static_cast<double>(f));
    }
    out.push_back(std::move(ctx));
  }
  return out;
}

}  // namespace cenet
