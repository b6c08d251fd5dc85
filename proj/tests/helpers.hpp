#pragma once

#include <cstdint>
#include <vector>

#include "summ/corpus.hpp"
#include "summ/model.hpp"
#include "summ/objectives.hpp"
#include "summ/random.hpp"
#include "summ/trainer.hpp"

namespace summ::testing {

ModelParams tiny_params(Mode mode, std::uint64_t seed, std::size_t vocab = 20, std::size_t embedding = 8,
                        std::size_t hidden = 12);

// Random pair over non-special ids with source length 1..max_len and
// 1..max_len content target tokens.
EncodedPair random_pair(Rng& rng, std::size_t vocab, std::size_t max_len);

// All parameters in key order.
std::vector<double> flatten(const ModelParams& p);
void unflatten(ModelParams& p, const std::vector<double>& theta);
std::vector<double> flatten(const GradMap& g, const ModelParams& like);

// Batch-mean training loss evaluated directly in extended precision, without
// the autodiff graph. Soft targets come from `frozen` (the unperturbed
// parameters), so finite differences see them as constants.
double frozen_target_loss(const ModelParams& p, const ModelParams& frozen, std::span<const EncodedPair> batch,
                          const RegularizerConfig& reg, bool soft_active = true);

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::string worst;
};

// backward() against central differences over every parameter scalar.
GradCheckResult check_model_gradients(const ModelParams& params, std::span<const EncodedPair> batch,
                                      const RegularizerConfig& reg, double step = 1e-5);

// Longest common subsequence by enumerating every subsequence of the
// shorter string. Exponential; intended for strings of at most 12 units.
std::size_t lcs_brute_force(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Clipped n-gram overlap by listing every n-gram of both strings and
// matching them one at a time.
std::size_t ngram_overlap_brute_force(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                                      std::size_t n);

// Log-probability of emitting `tokens` (without BOS) under head 1, from a
// teacher-forced pass with an extended-precision log-softmax.
double sequence_log_prob(const ModelParams& p, std::span<const TokenId> source, std::span<const TokenId> tokens);

struct BestSequence {
  std::vector<TokenId> tokens;  // BOS ... EOS
  double score = 0;
};

// Highest-probability output over every emittable sequence of at most
// max_len steps. Sequences that never emit EOS finish after max_len steps
// with an unscored EOS.
BestSequence exhaustive_best(const ModelParams& p, std::span<const TokenId> source, std::size_t max_len);

// Random string of 1..max_len code points drawn from a small alphabet.
std::vector<std::string> random_units(Rng& rng, std::size_t max_len, std::size_t alphabet = 5);

}  // namespace summ::testing
