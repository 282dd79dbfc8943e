#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace muplon::data {

inline constexpr std::size_t kSupports = 0;
inline constexpr std::size_t kRefutes = 1;
inline constexpr std::size_t kNotEnoughInfo = 2;

struct Sample {
  std::string claim;
  std::vector<std::string> evidences;
  std::size_t label = 0;
  std::vector<bool> noise_mask;  // per evidence; all false when unknown
  bool bias_token_present = false;

  bool operator==(const Sample&) const = default;
};

struct GenConfig {
  std::size_t n_samples = 2000;  // training split
  std::size_t n_test = 500;      // each test split
  std::size_t min_evidence = 3;
  std::size_t max_evidence = 8;
  double noise_fraction = 0.3;
  std::string bias_token = "flagged";
  double rho_train = 0.9;
  double rho_test = -0.9;  // symmetric split
  std::size_t vocab_size = 200;
  std::size_t n_classes = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Corpus {
  std::vector<Sample> train;
  std::vector<Sample> test_iid;
  std::vector<Sample> test_symmetric;
};

const std::vector<std::string>& class_names(std::size_t n_classes);

// Function words that may appear in any sentence. Apart from these, the
// negation cues and the bias token, every word is a content word.
const std::vector<std::string>& filler_words();

// Every sample comes from a latent fact (subject, relation, value). The
// claim states the fact. SUPPORTS evidence restates it; REFUTES evidence
// negates the relation for a conflicting value ("s r not v'"); context
// evidence, the only kind NOT-ENOUGH-INFO samples get, describes the
// subject through an attribute word rather than a relation. Noise evidence
// is an unrelated relational fact, negated half of the time, sharing no
// content word with the claim, so it reads like key evidence unless it is
// discounted. The bias token is put in the claim of REFUTES samples with
// probability (1 + rho)/2 and of the others with (1 - rho)/2.
Corpus generate(const GenConfig& cfg);

// P(bias | REFUTES) - P(bias | other label); estimates rho.
double bias_label_correlation(const std::vector<Sample>& samples);

std::string to_json_line(const Sample& s);
void write_jsonl(const std::filesystem::path& path, const std::vector<Sample>& samples);

// One JSON object per line: claim (string), evidences (array of strings),
// label (integer < n_classes), optional noise_mask (array of bool) and
// optional bias flag. Blank lines are ignored.
std::vector<Sample> load_jsonl(const std::filesystem::path& path, std::size_t n_classes);

}  // namespace muplon::data
