#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "summ/corpus.hpp"
#include "summ/model.hpp"

namespace summ {

// Position-wise agreement between decoded and reference summaries.
// Per pair: matches over max(|hyp|, |ref|) content tokens; the corpus figure
// pools matches and lengths over all pairs.
struct TokenAccuracy {
  std::size_t matched = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(matched) / static_cast<double>(total) : 0.0; }
};

TokenAccuracy token_accuracy(const ModelParams& params, std::span<const EncodedPair> pairs, std::size_t beam_size,
                             std::size_t max_len);

// For each pair, the vocabulary ids of the bijection images of its source
// tokens: the outputs that are consistent with the source.
std::vector<std::vector<TokenId>> consistent_sets(const SynthCorpus& corpus, std::span<const std::size_t> indices,
                                                  const Vocab& vocab);

struct ConsistencyReport {
  // Mean over gold labels of the row-averaged mass on the source-consistent
  // set.
  double consistent_mass = 0;
  // Mean over gold labels of the row's own entry.
  double diagonal_mass = 0;
  std::size_t labels = 0;
  std::size_t steps = 0;
};

// Teacher-forced head-1 distributions at content steps (EOS excluded),
// grouped by gold label like the relatedness matrix.
ConsistencyReport bijection_consistency(const ModelParams& params, std::span<const EncodedPair> pairs,
                                        std::span<const std::vector<TokenId>> consistent);

}  // namespace summ
