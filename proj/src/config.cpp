#include "cenet/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cenet {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

}  // namespace

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  RunConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = unquote(trim(line.substr(eq + 1)));
    try {
      if (key == "dataset_dir") c.dataset_dir = val;
      else if (key == "granularity") c.granularity = std::stoull(val);
      else if (key == "dim") c.hp.dim = std::stoull(val);
      else if (key == "alpha") c.hp.alpha = std::stod(val);
      else if (key == "lambda") c.hp.lambda = std::stod(val);
      else if (key == "tau") c.hp.tau = std::stod(val);
      else if (key == "batch_size") c.hp.batch_size = std::stoull(val);
      else if (key == "lr") c.hp.lr = std::stod(val);
      else if (key == "stage1_epochs") c.hp.stage1_epochs = std::stoull(val);
      else if (key == "stage2_epochs") c.hp.stage2_epochs = std::stoull(val);
      else if (key == "seed") c.hp.seed = std::stoull(val);
      else if (key == "mask_mode") c.mask_mode = val;
      else if (key == "filter_mode") c.filter_mode = val;
      else if (key == "ablation") c.ablation = val;
      else if (key == "out_dir") c.out_dir = val;
      else if (key == "use_cache") c.use_cache = (val == "true" || val == "1");
      else {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": unknown config key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": bad value for '" + key + "'");
    }
  }
  return c;
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  out.precision(17);
  out << "dataset_dir = \"" << dataset_dir << "\"\n";
  out << "granularity = " << granularity << "\n";
  out << "dim = " << hp.dim << "\n";
  out << "alpha = " << hp.alpha << "\n";
  out << "lambda = " << hp.lambda << "\n";
  out << "tau = " << hp.tau << "\n";
  out << "batch_size = " << hp.batch_size << "\n";
  out << "lr = " << hp.lr << "\n";
  out << "stage1_epochs = " << hp.stage1_epochs << "\n";
  out << "stage2_epochs = " << hp.stage2_epochs << "\n";
  out << "seed = " << hp.seed << "\n";
  out << "mask_mode = \"" << mask_mode << "\"\n";
  out << "filter_mode = \"" << filter_mode << "\"\n";
  out << "ablation = \"" << ablation << "\"\n";
  out << "out_dir = \"" << out_dir << "\"\n";
  out << "use_cache = " << (use_cache ? "true" : "false") << "\n";
  return out.str();
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write config: " + path);
  out << serialize();
}

InferenceConfig RunConfig::inference() const {
  InferenceConfig cfg;
  cfg.mask_mode = mask_mode_from_string(mask_mode);
  cfg.filter_mode = filter_mode_from_string(filter_mode);
  cfg.seed = hp.seed;
  cfg.lambda = hp.lambda;
  if (!ablation.empty()) {
    const auto ab = ablation_variant(ablation);
    cfg.head_mode = ab.head_mode;
    cfg.mask_mode = ab.mask_mode;
  }
  return cfg;
}

void RunConfig::validate() const {
  hp.validate();
  mask_mode_from_string(mask_mode);
  filter_mode_from_string(filter_mode);
  if (!ablation.empty()) ablation_variant(ablation);
  if (dataset_dir.empty())
    throw std::runtime_error("config: dataset_dir is required");
}

}  // namespace cenet
