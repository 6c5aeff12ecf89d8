#pragma once

#include <string>

#include "cenet/model.hpp"

namespace cenet {

/// Versioned checkpoint container: magic + JSON header (dims, vocab sizes,
/// hyperparameters, classifier flag) followed by named parameter blocks of
/// row-major little-endian f64. Load validates every block shape against
/// the header.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const HyperParams& hp);

struct LoadedCheckpoint {
  ModelParams params;
  HyperParams hp;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace cenet
