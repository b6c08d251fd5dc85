#include "summ/relatedness.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

namespace summ {

RelatednessMatrix::RelatednessMatrix(std::size_t vocab_size) : vocab_size_(vocab_size), counts_(vocab_size, 0) {
  if (dense()) dense_sums_.resize(vocab_size);
  else sparse_sums_.resize(vocab_size);
}

void RelatednessMatrix::add(TokenId label, std::span<const Real> distribution) {
  if (label >= vocab_size_) throw std::out_of_range("relatedness label out of range");
  if (distribution.size() != vocab_size_) throw std::invalid_argument("relatedness distribution has wrong length");
  ++counts_[label];
  if (dense()) {
    auto& row = dense_sums_[label];
    if (row.empty()) row.assign(vocab_size_, 0.0);
    for (std::size_t i = 0; i < vocab_size_; ++i) row[i] += distribution[i];
    return;
  }
  std::vector<TokenId> idx(vocab_size_);
  std::iota(idx.begin(), idx.end(), TokenId{0});
  const auto k = std::min(kSparseTopK, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](TokenId a, TokenId b) {
    if (distribution[a] != distribution[b]) return distribution[a] > distribution[b];
    return a < b;
  });
  auto& row = sparse_sums_[label];
  for (std::size_t i = 0; i < k; ++i) row[idx[i]] += distribution[idx[i]];
}

void RelatednessMatrix::merge(const RelatednessMatrix& other) {
  if (other.vocab_size_ != vocab_size_) throw std::invalid_argument("relatedness merge: vocab size mismatch");
  for (std::size_t l = 0; l < vocab_size_; ++l) {
    counts_[l] += other.counts_[l];
    if (dense()) {
      const auto& src = other.dense_sums_[l];
      if (src.empty()) continue;
      auto& dst = dense_sums_[l];
      if (dst.empty()) dst.assign(vocab_size_, 0.0);
      for (std::size_t i = 0; i < vocab_size_; ++i) dst[i] += src[i];
    } else {
      for (const auto& [i, v] : other.sparse_sums_[l]) sparse_sums_[l][i] += v;
    }
  }
}

std::vector<double> RelatednessMatrix::row(TokenId label) const {
  if (label >= vocab_size_ || counts_[label] == 0)
    throw std::out_of_range("relatedness row for label " + std::to_string(label) + " is absent");
  const double n = static_cast<double>(counts_[label]);
  std::vector<double> out(vocab_size_, 0.0);
  if (dense()) {
    for (std::size_t i = 0; i < vocab_size_; ++i) out[i] = dense_sums_[label][i] / n;
  } else {
    for (const auto& [i, v] : sparse_sums_[label]) out[i] = v / n;
  }
  return out;
}

namespace {

RelatednessMatrix accumulate_shard(const ModelParams& params, std::span<const EncodedPair> pairs) {
  RelatednessMatrix m(params.config.vocab_size);
  for (const auto& p : pairs) {
    Graph g;
    Seq2Seq model(g, params);
    const auto steps = model.teacher_forced(p.source, p.target);
    for (std::size_t t = 0; t < steps.size(); ++t) {
      Var probs = g.softmax(steps[t].logits_head1);
      m.add(p.target[t + 1], probs.value().data());
    }
  }
  return m;
}

}  // namespace

RelatednessMatrix accumulate_relatedness(const ModelParams& params, std::span<const EncodedPair> pairs,
                                         std::size_t threads) {
  threads = std::max<std::size_t>(1, std::min(threads, pairs.size()));
  if (threads == 1) return accumulate_shard(params, pairs);
  std::vector<RelatednessMatrix> parts(threads, RelatednessMatrix(params.config.vocab_size));
  std::vector<std::thread> workers;
  const std::size_t per = (pairs.size() + threads - 1) / threads;
  for (std::size_t s = 0; s < threads; ++s) {
    const auto begin = std::min(pairs.size(), s * per);
    const auto end = std::min(pairs.size(), begin + per);
    workers.emplace_back([&, s, begin, end] { parts[s] = accumulate_shard(params, pairs.subspan(begin, end - begin)); });
  }
  for (auto& w : workers) w.join();
  RelatednessMatrix total(params.config.vocab_size);
  for (const auto& p : parts) total.merge(p);
  return total;
}

std::vector<Related> top_k_related(const RelatednessMatrix& matrix, TokenId label, std::size_t k) {
  const auto row = matrix.row(label);
  std::vector<TokenId> idx;
  for (TokenId i = kNumSpecial; i < row.size(); ++i)
    if (i != label) idx.push_back(i);
  const auto n = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(), [&](TokenId a, TokenId b) {
    if (row[a] != row[b]) return row[a] > row[b];
    return a < b;
  });
  std::vector<Related> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({idx[i], row[idx[i]]});
  return out;
}

}  // namespace summ
