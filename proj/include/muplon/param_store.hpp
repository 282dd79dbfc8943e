#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "muplon/autodiff.hpp"
#include "muplon/tensor.hpp"

namespace muplon {

using Tensor = ad::Tensor<float>;
using GradientMap = std::map<std::string, Tensor>;

// Named float32 arrays for every sub-network plus non-trainable buffers.
// Names are unique; iteration order is lexicographic, which fixes the
// checkpoint layout.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };

  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  void add(const std::string& name, Tensor value, bool trainable = true);
  // Replaces an existing entry's value (shape may change) or adds a buffer.
  void assign(const std::string& name, Tensor value, bool trainable = false);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& mutable_value(const std::string& name);
  bool trainable(const std::string& name) const;

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t parameter_count() const;

  bool operator==(const ParamStore& other) const;

  // Writes `<stem>.json` (manifest) and `<stem>.bin` (little-endian f32 blob).
  void save(const std::filesystem::path& manifest, const std::filesystem::path& blob,
            const nlohmann::json& meta = nlohmann::json::object()) const;
  static ParamStore load(const std::filesystem::path& manifest, const std::filesystem::path& blob,
                         nlohmann::json* meta = nullptr);

 private:
  std::map<std::string, Entry> entries_;
  std::uint64_t seed_;
};

// Exposes store entries as tape leaves. Each name becomes one leaf per tape;
// trainable entries are gradient-tracked, buffers are constants.
class ParamBinding {
 public:
  ParamBinding(const ParamStore& store, ad::Tape<float>& tape) : store_(store), tape_(tape) {}

  ad::Var<float> operator()(const std::string& name);
  // Uses `var` for `name` on this tape instead of the stored value.
  void bind(const std::string& name, const ad::Var<float>& var);

  // Adds this tape's parameter gradients into `into`.
  void collect(GradientMap& into) const;

 private:
  const ParamStore& store_;
  ad::Tape<float>& tape_;
  std::map<std::string, ad::Var<float>> bound_;
};

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  // Applies one update using gradients averaged by `scale` (e.g. 1/batch).
  void step(ParamStore& store, const GradientMap& grads, double scale);

 private:
  OptimizerConfig cfg_;
  std::size_t steps_ = 0;
  std::unordered_map<std::string, std::vector<double>> m_;
  std::unordered_map<std::string, std::vector<double>> v_;
};

}  // namespace muplon
