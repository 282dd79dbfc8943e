#include "muplon/datagen.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "muplon/error.hpp"
#include "muplon/rng.hpp"

namespace muplon::data {

namespace {

using json = nlohmann::json;

// Six-letter consonant-vowel words: 14 consonants x 5 vowels, 3 syllables.
std::string pseudo_word(std::size_t i) {
  static constexpr char kCons[] = "bdfgklmnprstvz";
  static constexpr char kVow[] = "aeiou";
  constexpr std::size_t kSyll = 14 * 5;
  constexpr std::size_t kSpace = kSyll * kSyll * kSyll;
  std::size_t code = (i * 7919 + 13) % kSpace;  // 7919 is coprime to the space size
  std::string w;
  for (int s = 0; s < 3; ++s) {
    const std::size_t syl = code % kSyll;
    code /= kSyll;
    w.push_back(kCons[syl / 5]);
    w.push_back(kVow[syl % 5]);
  }
  return w;
}

struct Vocabulary {
  std::vector<std::string> subjects, relations, attributes, values;
};

// Relations and attributes are small closed word classes; subjects and
// values split the rest of the vocabulary.
constexpr std::size_t kRelations = 4;
constexpr std::size_t kAttributes = 4;

Vocabulary make_vocabulary(std::size_t size) {
  const std::size_t open = size > kRelations + kAttributes ? size - kRelations - kAttributes : 0;
  const std::size_t n_subj = open / 2;
  const std::size_t n_val = open - n_subj;
  const std::size_t n_rel = kRelations;
  const std::size_t n_attr = kAttributes;
  if (n_subj < 4 || n_val < 4) {
    throw ConfigError("vocab_size " + std::to_string(size) +
                      " too small for distinct fact templates (need >= 4 subjects and 4 values; use vocab_size >= 16)");
  }
  Vocabulary v;
  std::size_t next = 0;
  for (std::size_t i = 0; i < n_subj; ++i) v.subjects.push_back(pseudo_word(next++));
  for (std::size_t i = 0; i < n_rel; ++i) v.relations.push_back(pseudo_word(next++));
  for (std::size_t i = 0; i < n_attr; ++i) v.attributes.push_back(pseudo_word(next++));
  for (std::size_t i = 0; i < n_val; ++i) v.values.push_back(pseudo_word(next++));
  return v;
}

const std::vector<std::string>& negations() {
  static const std::vector<std::string> words{"not", "never"};
  return words;
}

std::size_t pick_other(Rng& rng, std::size_t n, std::size_t avoid) {
  std::size_t x = rng.index(n - 1);
  return x >= avoid ? x + 1 : x;
}

std::string render(std::vector<std::string> words, std::size_t min_fill, std::size_t max_fill, Rng& rng) {
  const auto& fillers = filler_words();
  const std::size_t n_fill = min_fill + rng.index(max_fill - min_fill + 1);
  for (std::size_t f = 0; f < n_fill; ++f) {
    const auto& w = fillers[rng.index(fillers.size())];
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.index(words.size() + 1)), w);
  }
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out + ".";
}

Sample make_sample(const GenConfig& cfg, const Vocabulary& vocab, double rho, Rng& rng) {
  Sample s;
  s.label = rng.index(cfg.n_classes);
  const std::size_t subj = rng.index(vocab.subjects.size());
  const std::size_t rel = rng.index(vocab.relations.size());
  const std::size_t val = rng.index(vocab.values.size());

  std::vector<std::string> claim_words{vocab.subjects[subj], vocab.relations[rel], vocab.values[val]};
  const double p_bias = s.label == kRefutes ? (1.0 + rho) / 2.0 : (1.0 - rho) / 2.0;
  s.bias_token_present = rng.bernoulli(p_bias);
  if (s.bias_token_present) {
    claim_words.insert(claim_words.begin() + static_cast<std::ptrdiff_t>(rng.index(claim_words.size() + 1)),
                       cfg.bias_token);
  }
  s.claim = render(std::move(claim_words), 1, 2, rng);

  const std::size_t n_ev = cfg.min_evidence + rng.index(cfg.max_evidence - cfg.min_evidence + 1);
  std::size_t n_noise = static_cast<std::size_t>(std::llround(cfg.noise_fraction * static_cast<double>(n_ev)));
  n_noise = std::min(n_noise, n_ev - 1);
  const std::size_t n_signal = n_ev - n_noise;
  std::size_t n_key = 0;
  if (s.label != kNotEnoughInfo) n_key = 1 + ((n_signal >= 2 && rng.bernoulli(0.5)) ? 1 : 0);
  const std::size_t refute_val = pick_other(rng, vocab.values.size(), val);

  std::vector<std::pair<std::string, bool>> evidences;
  for (std::size_t i = 0; i < n_signal; ++i) {
    std::vector<std::string> words;
    if (i < n_key && s.label == kSupports) {
      words = {vocab.subjects[subj], vocab.relations[rel], vocab.values[val]};
    } else if (i < n_key) {
      words = {vocab.subjects[subj], vocab.relations[rel], negations()[rng.index(negations().size())],
               vocab.values[refute_val]};
    } else {
      words = {vocab.subjects[subj], vocab.attributes[rng.index(vocab.attributes.size())],
               vocab.values[pick_other(rng, vocab.values.size(), val)]};
    }
    evidences.emplace_back(render(std::move(words), 1, 3, rng), false);
  }
  for (std::size_t i = 0; i < n_noise; ++i) {
    std::vector<std::string> words{vocab.subjects[pick_other(rng, vocab.subjects.size(), subj)],
                                   vocab.relations[pick_other(rng, vocab.relations.size(), rel)],
                                   vocab.values[pick_other(rng, vocab.values.size(), val)]};
    if (rng.bernoulli(0.5)) words.insert(words.begin() + 2, negations()[rng.index(negations().size())]);
    evidences.emplace_back(render(std::move(words), 1, 3, rng), true);
  }
  rng.shuffle(evidences);
  for (auto& [text, noisy] : evidences) {
    s.evidences.push_back(std::move(text));
    s.noise_mask.push_back(noisy);
  }
  return s;
}

std::vector<Sample> make_split(const GenConfig& cfg, const Vocabulary& vocab, std::size_t n, double rho,
                               std::uint64_t stream) {
  Rng rng(derive_seed(cfg.seed, {stream}));
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_sample(cfg, vocab, rho, rng));
  return out;
}

}  // namespace

void GenConfig::validate() const {
  if (!(noise_fraction >= 0.0 && noise_fraction <= 1.0)) throw ConfigError("noise_fraction must lie in [0, 1]");
  if (!(std::abs(rho_train) <= 1.0) || !(std::abs(rho_test) <= 1.0)) {
    throw ConfigError("bias correlations must lie in [-1, 1]");
  }
  if (min_evidence < 1 || max_evidence < min_evidence) {
    throw ConfigError("evidence range must satisfy 1 <= min <= max");
  }
  if (n_classes != 2 && n_classes != 3) throw ConfigError("n_classes must be 2 or 3");
  if (bias_token.empty()) throw ConfigError("bias token must not be empty");
}

const std::vector<std::string>& class_names(std::size_t n_classes) {
  static const std::vector<std::string> three{"SUPPORTS", "REFUTES", "NOT-ENOUGH-INFO"};
  static const std::vector<std::string> two{"SUPPORTS", "REFUTES"};
  if (n_classes == 2) return two;
  if (n_classes == 3) return three;
  throw ConfigError("n_classes must be 2 or 3");
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words{"the", "a",  "of",  "in",       "was",       "is",
                                              "by",  "on", "to",  "reported", "according", "that"};
  return words;
}

Corpus generate(const GenConfig& cfg) {
  cfg.validate();
  const Vocabulary vocab = make_vocabulary(cfg.vocab_size);
  Corpus c;
  c.train = make_split(cfg, vocab, cfg.n_samples, cfg.rho_train, 1);
  c.test_iid = make_split(cfg, vocab, cfg.n_test, cfg.rho_train, 2);
  c.test_symmetric = make_split(cfg, vocab, cfg.n_test, cfg.rho_test, 3);
  return c;
}

double bias_label_correlation(const std::vector<Sample>& samples) {
  double flagged_ref = 0, ref = 0, flagged_other = 0, other = 0;
  for (const auto& s : samples) {
    if (s.label == kRefutes) {
      ref += 1;
      flagged_ref += s.bias_token_present;
    } else {
      other += 1;
      flagged_other += s.bias_token_present;
    }
  }
  if (ref == 0 || other == 0) return std::nan("");
  return flagged_ref / ref - flagged_other / other;
}

std::string to_json_line(const Sample& s) {
  json j = {{"claim", s.claim},
            {"evidences", s.evidences},
            {"label", s.label},
            {"noise_mask", s.noise_mask},
            {"bias_token_present", s.bias_token_present}};
  return j.dump();
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : samples) out << to_json_line(s) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<Sample> load_jsonl(const std::filesystem::path& path, std::size_t n_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::vector<Sample> out;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    return FormatError(path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(std::string("malformed JSON (") + e.what() + ")");
    }
    if (!j.is_object()) throw fail("expected a JSON object");
    Sample s;
    if (!j.contains("claim") || !j["claim"].is_string()) throw fail("missing string field 'claim'");
    s.claim = j["claim"].get<std::string>();
    if (!j.contains("evidences") || !j["evidences"].is_array()) throw fail("missing array field 'evidences'");
    for (const auto& e : j["evidences"]) {
      if (!e.is_string()) throw fail("evidences must be strings");
      s.evidences.push_back(e.get<std::string>());
    }
    if (s.evidences.empty()) throw fail("at least one evidence is required");
    if (!j.contains("label") || !j["label"].is_number_integer()) throw fail("missing integer field 'label'");
    const auto label = j["label"].get<long long>();
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
      throw fail("unknown label " + std::to_string(label) + " for " + std::to_string(n_classes) + " classes");
    }
    s.label = static_cast<std::size_t>(label);
    s.noise_mask.assign(s.evidences.size(), false);
    if (j.contains("noise_mask")) {
      const auto& m = j["noise_mask"];
      if (!m.is_array() || m.size() != s.evidences.size()) throw fail("noise_mask must match evidences");
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (!m[i].is_boolean()) throw fail("noise_mask entries must be booleans");
        s.noise_mask[i] = m[i].get<bool>();
      }
    }
    for (const char* key : {"bias_token_present", "bias"}) {
      if (!j.contains(key)) continue;
      if (!j[key].is_boolean()) throw fail(std::string("'") + key + "' must be a boolean");
      s.bias_token_present = j[key].get<bool>();
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace muplon::data
