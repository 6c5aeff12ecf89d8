#pragma once

#include <string>

#include "cenet/eval.hpp"
#include "cenet/model.hpp"

namespace cenet {

/// Flat key = value run configuration. Unknown keys are rejected; saving a
/// run always writes the fully resolved config next to its outputs.
struct RunConfig {
  std::string dataset_dir;
  std::uint64_t granularity = 0;  // 0 = infer from raw timestamps
  HyperParams hp;
  std::string mask_mode = "soft";
  std::string filter_mode = "static";
  std::string ablation;  // empty = full model
  std::string out_dir = "out";
  bool use_cache = false;

  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;
  std::string serialize() const;

  InferenceConfig inference() const;
  void validate() const;
};

}  // namespace cenet
