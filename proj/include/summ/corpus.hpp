#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "summ/tokens.hpp"

namespace summ {

enum class Split { Train, Dev, Test };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct Pair {
  std::string id;
  std::string source;
  std::string summary;
  std::optional<int> score;  // relevance 1-5 when annotated
  Split split = Split::Train;

  friend bool operator==(const Pair&, const Pair&) = default;
};

class CorpusError : public std::runtime_error {
 public:
  CorpusError(const std::string& msg, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class CorpusFormat { JsonLines, Tsv };
CorpusFormat parse_format(std::string_view s);

// JSON lines: {"text": ..., "summary": ..., "score": int?, "id": str?}.
// TSV: text<TAB>summary[<TAB>score]. Blank lines are skipped; line numbers
// in errors are 1-based physical lines.
std::vector<Pair> parse_pairs(std::string_view content, CorpusFormat format, Split split = Split::Train);
std::vector<Pair> load_pairs(const std::filesystem::path& path, CorpusFormat format = CorpusFormat::JsonLines,
                             Split split = Split::Train);
std::string pair_to_json(const Pair& p);
void write_pairs(const std::filesystem::path& path, std::span<const Pair> pairs);

// Keeps pairs scored >= min_score. Unscored pairs survive only when
// min_score is 0.
std::vector<Pair> filter_by_score(std::span<const Pair> pairs, int min_score = 3);

enum class TokenPolicy { Words, Characters, Whitespace };
std::string_view policy_name(TokenPolicy p);
TokenPolicy parse_policy(std::string_view s);

// Words: pre-segmented text split on single spaces. Whitespace: split on
// any ASCII whitespace run. Characters: UTF-8 code points, whitespace
// dropped.
std::vector<std::string> tokenize(std::string_view text, TokenPolicy policy);
std::string detokenize(std::span<const std::string> tokens, TokenPolicy policy);

class Vocab {
 public:
  explicit Vocab(TokenPolicy policy);
  Vocab(TokenPolicy policy, std::vector<std::string> tokens_after_specials);

  TokenPolicy policy() const { return policy_; }
  std::size_t size() const { return id_to_token_.size(); }
  TokenId id(std::string_view token) const;  // kUnk when absent
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const;
  std::span<const std::string> tokens() const { return id_to_token_; }

  std::vector<TokenId> encode(std::string_view text) const;
  // BOS + encode(text) + EOS
  std::vector<TokenId> encode_target(std::string_view text) const;
  // Stops at EOS; PAD and BOS are dropped.
  std::string decode(std::span<const TokenId> ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.policy_ == b.policy_ && a.id_to_token_ == b.id_to_token_;
  }

 private:
  TokenPolicy policy_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

// Tokens ranked by frequency, then lexicographically; truncated so the
// vocabulary (specials included) holds at most max_size entries.
Vocab build_vocab(std::span<const Pair> pairs, TokenPolicy policy, std::size_t max_size = 10000,
                  std::size_t min_count = 1);

struct EncodedPair {
  std::vector<TokenId> source;
  std::vector<TokenId> target;  // BOS ... EOS
};
std::vector<EncodedPair> encode_pairs(std::span<const Pair> pairs, const Vocab& vocab);

struct SynthSpec {
  std::size_t content_vocab = 20;
  std::size_t num_pairs = 1000;
  std::size_t min_segments = 2;
  std::size_t max_segments = 5;
  std::size_t max_repeat = 3;
  double spurious_rate = 0.0;
  std::uint64_t seed = 0;
  Split split = Split::Train;

  void validate() const;
};

// Select-and-translate task: a source is k segments of distinct content
// tokens, each repeated 1..max_repeat times; the clean summary maps each
// segment token through a fixed seeded bijection. Spurious pairs keep the
// source but draw the summary uniformly at random with the same length.
// The bijection depends only on `seed`, so splits generated with the same
// seed share it.
struct SynthCorpus {
  std::vector<Pair> pairs;
  std::vector<bool> clean;                  // hidden from training
  std::vector<std::string> content_tokens;  // index -> token text
  std::vector<std::size_t> bijection;       // source index -> summary index
};

SynthCorpus synth_corpus(const SynthSpec& spec);
std::string synth_token(std::size_t index);

// Sidecar with one {"id": ..., "clean": bool} record per line.
void write_clean_sidecar(const std::filesystem::path& path, const SynthCorpus& corpus);

}  // namespace summ
