#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "ovvrd/pipeline/train.hpp"

namespace ovvrd::pipe {

namespace detail {

inline json tensor_to_json(const nn::Tensor& t) {
  json j;
  j["shape"] = t.shape();
  j["data"] = std::vector<double>(t.data(), t.data() + t.numel());
  return j;
}

inline nn::Tensor tensor_from_json(const json& j) {
  return nn::Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                    j.at("data").get<std::vector<double>>());
}

}  // namespace detail

// Serializes every learnable parameter, the adapter normalization statistics,
// the optimizer moments, and the step counter. Values round-trip exactly
// (shortest round-trip double serialization), so a reloaded model reproduces
// forward outputs bit-identically. The config hash must match on load.
inline void save_checkpoint(const RelationModel& model, const nn::AdamW& opt,
                            const std::string& path) {
  json j;
  j["format"] = 1;
  j["config_hash"] = model.config().hash();
  j["config"] = model.config().canonical_string();
  j["step"] = opt.step_count();

  json params = json::object();
  for (const auto& [name, v] : model.params().items) {
    params[name] = detail::tensor_to_json(v.value());
  }
  j["params"] = std::move(params);

  json m1 = json::object(), m2 = json::object();
  for (const auto& [name, t] : opt.moment1()) m1[name] = detail::tensor_to_json(t);
  for (const auto& [name, t] : opt.moment2()) m2[name] = detail::tensor_to_json(t);
  j["adam_m"] = std::move(m1);
  j["adam_v"] = std::move(m2);

  auto& self = const_cast<RelationModel&>(model);
  json norms = json::object();
  norms["adapter_v.mean"] =
      detail::tensor_to_json(self.aligner().visual_adapter().norm().running_mean());
  norms["adapter_v.var"] =
      detail::tensor_to_json(self.aligner().visual_adapter().norm().running_var());
  norms["adapter_t.mean"] =
      detail::tensor_to_json(self.aligner().text_adapter().norm().running_mean());
  norms["adapter_t.var"] =
      detail::tensor_to_json(self.aligner().text_adapter().norm().running_var());
  j["norm_stats"] = std::move(norms);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << j.dump(2) << "\n";
}

inline void load_checkpoint(RelationModel& model, nn::AdamW& opt,
                            const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (j.value("config_hash", std::uint64_t{0}) != model.config().hash()) {
    throw ValidationError("checkpoint config hash does not match the current config");
  }
  for (auto& [name, v] : model.params().items) {
    if (!j.at("params").contains(name)) {
      throw ValidationError("checkpoint missing parameter '" + name + "'");
    }
    nn::Tensor t = detail::tensor_from_json(j.at("params").at(name));
    if (!t.same_shape(v.value())) {
      throw ValidationError("checkpoint parameter '" + name + "' has wrong shape");
    }
    v.value() = std::move(t);
  }
  opt.moment1().clear();
  opt.moment2().clear();
  for (const auto& [name, t] : j.at("adam_m").items()) {
    opt.moment1()[name] = detail::tensor_from_json(t);
  }
  for (const auto& [name, t] : j.at("adam_v").items()) {
    opt.moment2()[name] = detail::tensor_from_json(t);
  }
  opt.set_step_count(j.value("step", std::int64_t{0}));

  const auto& norms = j.at("norm_stats");
  model.aligner().visual_adapter().norm().running_mean() =
      detail::tensor_from_json(norms.at("adapter_v.mean"));
  model.aligner().visual_adapter().norm().running_var() =
      detail::tensor_from_json(norms.at("adapter_v.var"));
  model.aligner().text_adapter().norm().running_mean() =
      detail::tensor_from_json(norms.at("adapter_t.mean"));
  model.aligner().text_adapter().norm().running_var() =
      detail::tensor_from_json(norms.at("adapter_t.var"));
}

}  // namespace ovvrd::pipe
