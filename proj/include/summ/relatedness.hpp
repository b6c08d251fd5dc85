#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "summ/corpus.hpp"
#include "summ/model.hpp"

namespace summ {

// Per-gold-label mean of the first head's output distribution (softmax at
// temperature 1) over teacher-forced decoding steps. Row l answers "what
// does the model spread its mass over when the answer is l".
class RelatednessMatrix {
 public:
  // Vocabularies above this size keep only the top entries of every step.
  static constexpr std::size_t kDenseLimit = 20000;
  static constexpr std::size_t kSparseTopK = 256;

  explicit RelatednessMatrix(std::size_t vocab_size);

  std::size_t vocab_size() const { return vocab_size_; }
  bool dense() const { return vocab_size_ <= kDenseLimit; }
  std::size_t count(TokenId label) const { return counts_.at(label); }
  bool present(TokenId label) const { return counts_.at(label) > 0; }

  void add(TokenId label, std::span<const Real> distribution);
  void merge(const RelatednessMatrix& other);

  // Mean distribution of a present row; throws for absent rows.
  std::vector<double> row(TokenId label) const;

 private:
  std::size_t vocab_size_;
  std::vector<std::size_t> counts_;
  std::vector<std::vector<double>> dense_sums_;
  std::vector<std::map<TokenId, double>> sparse_sums_;
};

// Runs teacher-forced passes over `pairs`. With threads > 1 the pairs are
// split into contiguous shards whose partial sums are merged in shard order.
RelatednessMatrix accumulate_relatedness(const ModelParams& params, std::span<const EncodedPair> pairs,
                                         std::size_t threads = 1);

struct Related {
  TokenId label;
  double value;
};

// Highest entries of a row, skipping the label itself and the reserved ids;
// ties go to the lower id.
std::vector<Related> top_k_related(const RelatednessMatrix& matrix, TokenId label, std::size_t k = 4);

}  // namespace summ
