#include "muplon/encoder.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "muplon/error.hpp"
#include "muplon/rng.hpp"

namespace muplon::encoder {

namespace {

bool is_alnum_ascii(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

char lower_ascii(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

}  // namespace

void EmbeddingTable::insert(std::string token, std::vector<float> vec) {
  if (table_.empty()) dim_ = vec.size();
  if (vec.size() != dim_) {
    throw FormatError("embedding for '" + token + "' has " + std::to_string(vec.size()) +
                      " values, expected " + std::to_string(dim_));
  }
  table_[std::move(token)] = std::move(vec);
}

const std::vector<float>* EmbeddingTable::find(const std::string& token) const {
  auto it = table_.find(token);
  return it == table_.end() ? nullptr : &it->second;
}

EmbeddingTable load_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path.string());
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<float> vec;
    std::string num;
    while (fields >> num) {
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
      if (ec != std::errc() || ptr != num.data() + num.size()) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + num + "'");
      }
      vec.push_back(v);
    }
    if (vec.empty()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": token without a vector");
    }
    if (!table.empty() && vec.size() != table.dim()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": vector has " +
                        std::to_string(vec.size()) + " values, expected " + std::to_string(table.dim()));
    }
    table.insert(token, std::move(vec));
  }
  return table;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (is_alnum_ascii(c)) {
      cur.push_back(lower_ascii(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::uint64_t token_hash(std::string_view token, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed);
  for (unsigned char c : token) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

Encoder::Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.mode == Mode::EmbeddingFile) {
    table_ = load_embedding_file(cfg_.embedding_file);
    cfg_.dim = table_.dim();
  } else if (cfg_.dim < 8) {
    throw ConfigError("encoder dim must be at least 8, got " + std::to_string(cfg_.dim));
  }
}

Encoder::Encoder(EncoderConfig cfg, EmbeddingTable table) : cfg_(std::move(cfg)), table_(std::move(table)) {
  if (cfg_.mode == Mode::EmbeddingFile) {
    cfg_.dim = table_.dim();
  } else if (cfg_.dim < 8) {
    throw ConfigError("encoder dim must be at least 8, got " + std::to_string(cfg_.dim));
  }
}

std::vector<float> Encoder::encode(std::string_view text) const {
  const auto tokens = tokenize(text);
  if (cfg_.mode == Mode::EmbeddingFile) {
    if (table_.empty()) throw ConfigError("embedding table is empty; cannot encode");
    std::vector<double> acc(cfg_.dim, 0.0);
    for (const auto& tok : tokens) {
      if (const auto* vec = table_.find(tok)) {
        for (std::size_t i = 0; i < cfg_.dim; ++i) acc[i] += (*vec)[i];
      }
    }
    std::vector<float> out(cfg_.dim, 0.0f);
    if (!tokens.empty()) {
      for (std::size_t i = 0; i < cfg_.dim; ++i) {
        out[i] = static_cast<float>(acc[i] / static_cast<double>(tokens.size()));
      }
    }
    return out;
  }

  std::vector<double> acc(cfg_.dim, 0.0);
  for (const auto& tok : tokens) {
    const std::uint64_t h = token_hash(tok, cfg_.hash_seed);
    const std::size_t bucket = static_cast<std::size_t>(h % cfg_.dim);
    acc[bucket] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  std::vector<float> out(cfg_.dim, 0.0f);
  if (norm > 0.0) {
    for (std::size_t i = 0; i < cfg_.dim; ++i) out[i] = static_cast<float>(acc[i] / norm);
  }
  return out;
}

}  // namespace muplon::encoder
