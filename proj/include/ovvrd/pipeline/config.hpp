#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ovvrd/core/error.hpp"
#include "ovvrd/core/hash.hpp"

namespace ovvrd::pipe {

// Flat key=value configuration. Defaults follow the reference hyperparameters
// (30 sampled frames, 8 heads, dropout 0.1, 8 prompt tokens with the class
// token at 75%, lr 1e-3 decayed 10x at epochs 15/20/25, batch 32). The
// OVVRD_SEED environment variable overrides the seed.
struct Config {
  std::uint64_t seed = 42;

  std::string encoder_kind = "synthetic";  // synthetic | external
  std::string encoder_dir;

  std::size_t d = 64;
  std::size_t d_token = 64;
  std::size_t n_heads = 8;
  std::size_t n_layers = 2;
  double dropout = 0.1;
  std::size_t t = 30;      // sampled frames per pair
  std::size_t t_max = 64;

  std::string aggregation_manner = "cross_attention";

  std::string prompt_variant = "mixed";
  std::size_t m_tokens = 8;
  double cls_fraction = 0.75;

  std::string adapter_which = "visual";
  std::size_t adapter_bottleneck = 16;

  double tracklet_tau = 0.01;
  double relation_tau = 1.0;  // temperature on the relation cosine during training

  double lr = 1e-3;
  std::vector<int> decay_epochs{15, 20, 25};
  double decay_factor = 0.1;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::size_t max_steps = 0;  // 0 = run every epoch to completion
  double gamma = 0.5;
  double delta = 0.5;
  double weight_decay = 1e-4;

  std::size_t top_n = 200;

  void set(const std::string& key, const std::string& value) {
    try {
      if (key == "seed") seed = std::stoull(value);
      else if (key == "encoder.kind") encoder_kind = value;
      else if (key == "encoder.dir") encoder_dir = value;
      else if (key == "model.d") d = std::stoul(value);
      else if (key == "model.d_token") d_token = std::stoul(value);
      else if (key == "model.n_heads") n_heads = std::stoul(value);
      else if (key == "model.n_layers") n_layers = std::stoul(value);
      else if (key == "model.dropout") dropout = std::stod(value);
      else if (key == "model.t") t = std::stoul(value);
      else if (key == "model.t_max") t_max = std::stoul(value);
      else if (key == "aggregation.manner") aggregation_manner = value;
      else if (key == "prompt.variant") prompt_variant = value;
      else if (key == "prompt.m_tokens") m_tokens = std::stoul(value);
      else if (key == "prompt.cls_fraction") cls_fraction = std::stod(value);
      else if (key == "adapter.which") adapter_which = value;
      else if (key == "adapter.bottleneck") adapter_bottleneck = std::stoul(value);
      else if (key == "tracklet.tau") tracklet_tau = std::stod(value);
      else if (key == "relation.tau") relation_tau = std::stod(value);
      else if (key == "train.lr") lr = std::stod(value);
      else if (key == "train.decay_epochs") decay_epochs = parse_int_list(value);
      else if (key == "train.decay_factor") decay_factor = std::stod(value);
      else if (key == "train.batch_size") batch_size = std::stoul(value);
      else if (key == "train.epochs") epochs = std::stoul(value);
      else if (key == "train.max_steps") max_steps = std::stoul(value);
      else if (key == "train.gamma") gamma = std::stod(value);
      else if (key == "train.delta") delta = std::stod(value);
      else if (key == "train.weight_decay") weight_decay = std::stod(value);
      else if (key == "infer.top_n") top_n = std::stoul(value);
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad value '" + value + "' for key '" + key + "'");
    } catch (const std::out_of_range&) {
      throw ConfigError("value out of range for key '" + key + "'");
    }
  }

  void set_pair(const std::string& pair) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("expected key=value, got '" + pair + "'");
    }
    set(pair.substr(0, eq), pair.substr(eq + 1));
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash_pos = line.find('#');
      if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
      // trim
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto last = line.find_last_not_of(" \t\r");
      try {
        set_pair(line.substr(first, last - first + 1));
      } catch (const ConfigError& e) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  void apply_env() {
    if (const char* env = std::getenv("OVVRD_SEED")) {
      seed = std::stoull(env);
    }
  }

  void validate() const {
    if (lr <= 0.0) throw ConfigError("train.lr must be positive");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    for (std::size_t i = 1; i < decay_epochs.size(); ++i) {
      if (decay_epochs[i] <= decay_epochs[i - 1]) {
        throw ConfigError("train.decay_epochs must be strictly increasing");
      }
    }
    if (d % n_heads != 0) throw ConfigError("model.d must be divisible by model.n_heads");
    if (t < 1 || t > t_max) throw ConfigError("model.t must lie in [1, model.t_max]");
    if (gamma < 0.0 || delta < 0.0) throw ConfigError("loss weights must be >= 0");
    if (relation_tau <= 0.0 || tracklet_tau <= 0.0) {
      throw ConfigError("temperatures must be positive");
    }
    if (encoder_kind != "synthetic" && encoder_kind != "external") {
      throw ConfigError("encoder.kind must be synthetic or external");
    }
    if (encoder_kind == "external" && encoder_dir.empty()) {
      throw ConfigError("encoder.kind=external requires encoder.dir");
    }
  }

  std::string canonical_string() const {
    std::ostringstream os;
    os << "adapter.bottleneck=" << adapter_bottleneck << "\n"
       << "adapter.which=" << adapter_which << "\n"
       << "aggregation.manner=" << aggregation_manner << "\n"
       << "encoder.dir=" << encoder_dir << "\n"
       << "encoder.kind=" << encoder_kind << "\n"
       << "infer.top_n=" << top_n << "\n"
       << "model.d=" << d << "\n"
       << "model.d_token=" << d_token << "\n"
       << "model.dropout=" << dropout << "\n"
       << "model.n_heads=" << n_heads << "\n"
       << "model.n_layers=" << n_layers << "\n"
       << "model.t=" << t << "\n"
       << "model.t_max=" << t_max << "\n"
       << "prompt.cls_fraction=" << cls_fraction << "\n"
       << "prompt.m_tokens=" << m_tokens << "\n"
       << "prompt.variant=" << prompt_variant << "\n"
       << "relation.tau=" << relation_tau << "\n"
       << "seed=" << seed << "\n"
       << "tracklet.tau=" << tracklet_tau << "\n"
       << "train.batch_size=" << batch_size << "\n"
       << "train.decay_epochs=" << join_ints(decay_epochs) << "\n"
       << "train.decay_factor=" << decay_factor << "\n"
       << "train.delta=" << delta << "\n"
       << "train.epochs=" << epochs << "\n"
       << "train.gamma=" << gamma << "\n"
       << "train.lr=" << lr << "\n"
       << "train.max_steps=" << max_steps << "\n"
       << "train.weight_decay=" << weight_decay << "\n";
    return os.str();
  }

  std::uint64_t hash() const { return fnv1a(kFnvOffset, canonical_string()); }

 private:
  static std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
  }

  static std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(v[i]);
    }
    return out;
  }
};

}  // namespace ovvrd::pipe
