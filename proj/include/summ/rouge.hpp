#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace summ {

struct RougeValue {
  double recall = 0;
  double precision = 0;
  double f1 = 0;

  static RougeValue from_counts(std::size_t overlap, std::size_t ref_total, std::size_t cand_total);
  friend bool operator==(const RougeValue&, const RougeValue&) = default;
};

// Character units for scoring: UTF-8 code points with whitespace removed;
// punctuation is kept.
std::vector<std::string> rouge_units(std::string_view text);

// Clipped n-gram overlap over characters. nullopt when the reference has
// fewer than n characters (score undefined, the pair is skipped).
std::optional<RougeValue> rouge_n(std::string_view candidate, std::string_view reference, std::size_t n);
std::optional<RougeValue> rouge_n_units(std::span<const std::string> candidate, std::span<const std::string> reference,
                                        std::size_t n);

struct RougeLResult {
  RougeValue value;
  std::size_t lcs = 0;
  bool empty_input = false;  // scored 0; callers should warn
};

RougeLResult rouge_l(std::string_view candidate, std::string_view reference);
RougeLResult rouge_l_units(std::span<const std::string> candidate, std::span<const std::string> reference);
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct PairRouge {
  std::optional<RougeValue> rouge1;
  std::optional<RougeValue> rouge2;
  RougeLResult rougeL;
};

PairRouge score_pair(std::string_view candidate, std::string_view reference);

struct RougeScore {
  RougeValue rouge1, rouge2, rougeL;
  std::size_t pairs = 0;
  std::size_t skipped_rouge1 = 0;
  std::size_t skipped_rouge2 = 0;
  std::size_t empty_rougeL = 0;
};

// Arithmetic mean over pairs; skipped pairs are excluded from that metric's
// mean and counted. Sums run over sorted values so the result does not
// depend on pair order.
RougeScore corpus_rouge(std::span<const std::string> candidates, std::span<const std::string> references);
RougeScore aggregate_rouge(std::span<const PairRouge> scores);

}  // namespace summ
