#include "cenet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace cenet {

namespace {

constexpr char kMagic[8] = {'C', 'E', 'N', 'E', 'T', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));  // little-endian hosts only
  buf.append(raw, sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size())
    throw std::runtime_error("checkpoint truncated");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

void put_block(std::string& buf, const Parameter& p) {
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(p.name.size()));
  buf.append(p.name);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(p.value.ndim()));
  for (auto d : p.value.shape()) put<std::uint64_t>(buf, d);
  const auto& vals = p.value.values();
  buf.append(reinterpret_cast<const char*>(vals.data()),
             vals.size() * sizeof(double));
}

std::vector<const Parameter*> stage1_list(const ModelParams& p) {
  return {&p.entities, &p.relations, &p.w_his, &p.b_his, &p.w_nhis,
          &p.b_nhis,   &p.wf,        &p.mlp_w1, &p.mlp_b1, &p.mlp_w2,
          &p.mlp_b2};
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const HyperParams& hp) {
  nlohmann::json header;
  header["version"] = kVersion;
  header["dim"] = params.dim;
  header["num_entities"] = params.num_entities;
  header["num_relations_total"] = params.num_relations_total;
  header["has_classifier"] = params.has_classifier;
  header["hyperparams"] = {{"dim", hp.dim},
                           {"alpha", hp.alpha},
                           {"lambda", hp.lambda},
                           {"tau", hp.tau},
                           {"batch_size", hp.batch_size},
                           {"lr", hp.lr},
                           {"stage1_epochs", hp.stage1_epochs},
                           {"stage2_epochs", hp.stage2_epochs},
                           {"seed", hp.seed}};
  const std::string hjson = header.dump();

  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(hjson.size()));
  buf.append(hjson);

  auto blocks = stage1_list(params);
  if (params.has_classifier) {
    blocks.push_back(&params.cls_w);
    blocks.push_back(&params.cls_b);
  }
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(blocks.size()));
  for (const auto* b : blocks) put_block(buf, *b);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) ||
      std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::size_t pos = sizeof(kMagic);
  const auto hlen = get<std::uint32_t>(buf, pos);
  if (pos + hlen > buf.size())
    throw std::runtime_error("checkpoint header truncated");
  const auto header = nlohmann::json::parse(buf.substr(pos, hlen));
  pos += hlen;
  if (header.at("version").get<std::uint32_t>() != kVersion) {
    throw std::runtime_error("unsupported checkpoint version in " + path);
  }

  LoadedCheckpoint ck;
  const auto& hj = header.at("hyperparams");
  ck.hp.dim = hj.at("dim");
  ck.hp.alpha = hj.at("alpha");
  ck.hp.lambda = hj.at("lambda");
  ck.hp.tau = hj.at("tau");
  ck.hp.batch_size = hj.at("batch_size");
  ck.hp.lr = hj.at("lr");
  ck.hp.stage1_epochs = hj.at("stage1_epochs");
  ck.hp.stage2_epochs = hj.at("stage2_epochs");
  ck.hp.seed = hj.at("seed");

  const std::size_t dim = header.at("dim");
  const std::size_t num_e = header.at("num_entities");
  const std::size_t num_r = header.at("num_relations_total");
  ck.params = ModelParams::init(num_e, num_r, dim, 0);
  ck.params.has_classifier = header.at("has_classifier").get<bool>();

  const auto count = get<std::uint32_t>(buf, pos);
  std::vector<Parameter*> targets;
  for (auto* p : stage1_list(ck.params)) {
    targets.push_back(const_cast<Parameter*>(p));
  }
  if (ck.params.has_classifier) {
    targets.push_back(&ck.params.cls_w);
    targets.push_back(&ck.params.cls_b);
  }
  if (count != targets.size()) {
    throw std::runtime_error("checkpoint block count mismatch in " + path);
  }
  for (auto* target : targets) {
    const auto nlen = get<std::uint32_t>(buf, pos);
    if (pos + nlen > buf.size())
      throw std::runtime_error("checkpoint truncated");
    const std::string name = buf.substr(pos, nlen);
    pos += nlen;
    if (name != target->name) {
      throw std::runtime_error("checkpoint block '" + name +
                               "' does not match expected '" + target->name +
                               "'");
    }
    const auto ndim = get<std::uint32_t>(buf, pos);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = get<std::uint64_t>(buf, pos);
    if (shape != target->value.shape()) {
      std::string got = "[";
      for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) got += "x";
        got += std::to_string(shape[i]);
      }
      got += "]";
      throw std::runtime_error("checkpoint block '" + name + "' has shape " +
                               got + ", expected " +
                               target->value.shape_str());
    }
    const std::size_t bytes = target->value.numel() * sizeof(double);
    if (pos + bytes > buf.size())
      throw std::runtime_error("checkpoint truncated");
    std::memcpy(target->value.data(), buf.data() + pos, bytes);
    pos += bytes;
  }
  return ck;
}

}  // namespace cenet
