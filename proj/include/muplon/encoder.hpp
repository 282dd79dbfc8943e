#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace muplon::encoder {

enum class Mode { HashedBagOfWords, EmbeddingFile };

struct EncoderConfig {
  Mode mode = Mode::HashedBagOfWords;
  std::size_t dim = 64;
  std::uint64_t hash_seed = 0;
  std::filesystem::path embedding_file;
};

class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  void insert(std::string token, std::vector<float> vec);
  const std::vector<float>* find(const std::string& token) const;
  std::size_t size() const { return table_.size(); }
  std::size_t dim() const { return dim_; }
  bool empty() const { return table_.empty(); }

 private:
  std::unordered_map<std::string, std::vector<float>> table_;
  std::size_t dim_ = 0;
};

// One entry per line: a token followed by space-separated decimal floats.
// Blank lines are skipped; a vector whose length disagrees with the first
// entry is a FormatError naming the line.
EmbeddingTable load_embedding_file(const std::filesystem::path& path);

// Maximal runs of ASCII letters and digits, lowercased. Every other byte
// separates tokens.
std::vector<std::string> tokenize(std::string_view text);

// Seeded 64-bit token hash (FNV-1a followed by a splitmix finalizer).
std::uint64_t token_hash(std::string_view token, std::uint64_t seed);

class Encoder {
 public:
  // Loads the embedding file when cfg.mode is EmbeddingFile.
  explicit Encoder(EncoderConfig cfg);
  Encoder(EncoderConfig cfg, EmbeddingTable table);

  std::size_t dim() const { return cfg_.dim; }
  const EncoderConfig& config() const { return cfg_; }

  std::vector<float> encode(std::string_view text) const;

 private:
  EncoderConfig cfg_;
  EmbeddingTable table_;
};

}  // namespace muplon::encoder
