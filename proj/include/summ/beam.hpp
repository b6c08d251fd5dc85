#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "summ/model.hpp"

namespace summ {

struct BeamOptions {
  std::size_t beam_size = 5;
  // Number of decoding steps. A hypothesis still open after max_len steps is
  // finished as is: EOS is appended to its tokens but not scored.
  std::size_t max_len = 30;
  // Rank finished hypotheses by log-probability / generated length.
  bool length_normalize = false;
};

struct Decoded {
  std::vector<TokenId> tokens;  // BOS ... EOS
  double log_prob = 0;
  bool forced_finish = false;

  // Tokens strictly between BOS and EOS.
  std::span<const TokenId> content() const;
};

// Scores with head 1 only. PAD and BOS are never emitted. Candidates are
// pruned by (higher score, lower token id, earlier parent hypothesis).
Decoded beam_search(const ModelParams& params, std::span<const TokenId> source, const BeamOptions& options);
// Argmax per step, ties to the lowest id.
Decoded greedy(const ModelParams& params, std::span<const TokenId> source, std::size_t max_len);

// log softmax over the first head's logits.
std::vector<double> log_softmax(std::span<const Real> logits);

}  // namespace summ
