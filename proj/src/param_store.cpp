#include "muplon/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "muplon/error.hpp"

namespace muplon {

namespace {

constexpr const char* kFormat = "muplon-checkpoint";
constexpr int kVersion = 1;

void put_f32_le(std::vector<char>& out, float value) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float get_f32_le(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

void ParamStore::add(const std::string& name, Tensor value, bool trainable) {
  if (name.empty()) throw ConfigError("parameter name must not be empty");
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  entries_.emplace(name, Entry{std::move(value), trainable});
}

void ParamStore::assign(const std::string& name, Tensor value, bool trainable) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    add(name, std::move(value), trainable);
  } else {
    it->second.value = std::move(value);
  }
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second.value;
}

Tensor& ParamStore::mutable_value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second.value;
}

bool ParamStore::trainable(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second.trainable;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) {
    if (e.trainable) n += e.value.size();
  }
  return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (seed_ != other.seed_ || entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.trainable != b->second.trainable) return false;
    if (a->second.value.shape() != b->second.value.shape()) return false;
    // Bitwise comparison: NaN payloads and signed zeros must survive too.
    if (std::memcmp(a->second.value.storage().data(), b->second.value.storage().data(),
                    a->second.value.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

void ParamStore::save(const std::filesystem::path& manifest, const std::filesystem::path& blob,
                      const nlohmann::json& meta) const {
  std::vector<char> bytes;
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, e] : entries_) {
    tensors[name] = {{"shape", e.value.shape()},
                     {"dtype", "f32"},
                     {"offset", bytes.size()},
                     {"trainable", e.trainable}};
    for (float x : e.value.storage()) put_f32_le(bytes, x);
  }
  nlohmann::json doc = {{"format", kFormat},
                        {"version", kVersion},
                        {"seed", seed_},
                        {"blob", blob.filename().string()},
                        {"total_bytes", bytes.size()},
                        {"tensors", tensors},
                        {"meta", meta}};

  std::ofstream bin(blob, std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot write " + blob.string());
  bin.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!bin) throw IoError("short write to " + blob.string());

  std::ofstream js(manifest, std::ios::trunc);
  if (!js) throw IoError("cannot write " + manifest.string());
  js << doc.dump(2) << '\n';
  if (!js) throw IoError("short write to " + manifest.string());
}

ParamStore ParamStore::load(const std::filesystem::path& manifest, const std::filesystem::path& blob,
                            nlohmann::json* meta) {
  std::ifstream js(manifest);
  if (!js) throw IoError("cannot open " + manifest.string());
  nlohmann::json doc;
  try {
    js >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  if (doc.value("format", "") != kFormat || doc.value("version", 0) != kVersion) {
    throw FormatError(manifest.string() + ": not a version-1 muplon checkpoint manifest");
  }

  std::ifstream bin(blob, std::ios::binary);
  if (!bin) throw IoError("cannot open " + blob.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  const auto total = doc.at("total_bytes").get<std::size_t>();
  if (bytes.size() != total) {
    throw FormatError(blob.string() + ": expected " + std::to_string(total) + " bytes, found " +
                      std::to_string(bytes.size()));
  }

  ParamStore store(doc.at("seed").get<std::uint64_t>());
  std::size_t covered = 0;
  for (const auto& [name, info] : doc.at("tensors").items()) {
    if (info.at("dtype").get<std::string>() != "f32") {
      throw FormatError(manifest.string() + ": tensor '" + name + "' has unsupported dtype");
    }
    const auto shape = info.at("shape").get<ad::Shape>();
    const auto offset = info.at("offset").get<std::size_t>();
    const std::size_t n = ad::shape_size(shape);
    if (offset + 4 * n > bytes.size()) {
      throw FormatError(manifest.string() + ": tensor '" + name + "' runs past the end of the blob");
    }
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = get_f32_le(bytes.data() + offset + 4 * i);
    store.add(name, Tensor(shape, std::move(data)), info.value("trainable", true));
    covered += 4 * n;
  }
  if (covered != total) {
    throw FormatError(manifest.string() + ": tensors cover " + std::to_string(covered) + " of " +
                      std::to_string(total) + " bytes");
  }
  if (meta) *meta = doc.value("meta", nlohmann::json::object());
  return store;
}

ad::Var<float> ParamBinding::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const auto& value = store_.get(name);
  auto var = store_.trainable(name) ? tape_.variable(value) : tape_.constant(value);
  bound_.emplace(name, var);
  return var;
}

void ParamBinding::bind(const std::string& name, const ad::Var<float>& var) {
  if (!store_.contains(name)) throw ConfigError("bind: unknown parameter " + name);
  if (var.shape() != store_.get(name).shape()) {
    throw ShapeError("bind: " + name + " expects " + ad::shape_string(store_.get(name).shape()) + ", got " +
                     ad::shape_string(var.shape()));
  }
  bound_.insert_or_assign(name, var);
}

void ParamBinding::collect(GradientMap& into) const {
  for (const auto& [name, var] : bound_) {
    if (!var.requires_grad()) continue;
    Tensor g = var.grad();
    auto it = into.find(name);
    if (it == into.end()) {
      into.emplace(name, std::move(g));
    } else {
      auto& acc = it->second.storage();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    }
  }
}

void Optimizer::step(ParamStore& store, const GradientMap& grads, double scale) {
  ++steps_;
  const double lr = cfg_.learning_rate;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (const auto& [name, g] : grads) {
    if (!store.trainable(name)) continue;
    auto& w = store.mutable_value(name).storage();
    if (cfg_.kind == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = static_cast<float>(w[i] - lr * scale * g[i]);
      }
      continue;
    }
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(w.size(), 0.0);
      v.assign(w.size(), 0.0);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = scale * g[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] = static_cast<float>(w[i] - lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
    }
  }
}

}  // namespace muplon
