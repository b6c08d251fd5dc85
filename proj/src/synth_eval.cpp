#include "summ/synth_eval.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "summ/beam.hpp"

namespace summ {

TokenAccuracy token_accuracy(const ModelParams& params, std::span<const EncodedPair> pairs, std::size_t beam_size,
                             std::size_t max_len) {
  TokenAccuracy acc;
  for (const auto& p : pairs) {
    const auto d = beam_search(params, p.source, {beam_size, max_len, false});
    const auto hyp = d.content();
    const std::span<const TokenId> ref(p.target.data() + 1, p.target.size() - 2);
    const auto n = std::min(hyp.size(), ref.size());
    for (std::size_t i = 0; i < n; ++i) acc.matched += hyp[i] == ref[i] ? 1 : 0;
    acc.total += std::max(hyp.size(), ref.size());
  }
  return acc;
}

std::vector<std::vector<TokenId>> consistent_sets(const SynthCorpus& corpus, std::span<const std::size_t> indices,
                                                  const Vocab& vocab) {
  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < corpus.content_tokens.size(); ++i) index_of[corpus.content_tokens[i]] = i;
  std::vector<std::vector<TokenId>> out;
  for (auto pi : indices) {
    std::vector<TokenId> set;
    for (const auto& tok : tokenize(corpus.pairs.at(pi).source, TokenPolicy::Characters)) {
      const auto id = vocab.id(corpus.content_tokens[corpus.bijection[index_of.at(tok)]]);
      if (std::find(set.begin(), set.end(), id) == set.end()) set.push_back(id);
    }
    std::sort(set.begin(), set.end());
    out.push_back(std::move(set));
  }
  return out;
}

ConsistencyReport bijection_consistency(const ModelParams& params, std::span<const EncodedPair> pairs,
                                        std::span<const std::vector<TokenId>> consistent) {
  if (pairs.size() != consistent.size()) throw std::invalid_argument("bijection_consistency: misaligned inputs");
  const auto m = params.config.vocab_size;
  std::vector<double> mass_sum(m, 0.0), diag_sum(m, 0.0);
  std::vector<std::size_t> count(m, 0);
  ConsistencyReport r;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Graph g;
    Seq2Seq model(g, params);
    const auto steps = model.teacher_forced(pairs[i].source, pairs[i].target);
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const TokenId gold = pairs[i].target[t + 1];
      if (gold == kEos) continue;
      const auto& probs = g.softmax(steps[t].logits_head1).value();
      double mass = 0;
      for (auto id : consistent[i]) mass += probs[id];
      mass_sum[gold] += mass;
      diag_sum[gold] += probs[gold];
      ++count[gold];
      ++r.steps;
    }
  }
  for (std::size_t l = 0; l < m; ++l) {
    if (!count[l]) continue;
    r.consistent_mass += mass_sum[l] / static_cast<double>(count[l]);
    r.diagonal_mass += diag_sum[l] / static_cast<double>(count[l]);
    ++r.labels;
  }
  if (r.labels) {
    r.consistent_mass /= static_cast<double>(r.labels);
    r.diagonal_mass /= static_cast<double>(r.labels);
  }
  return r;
}

}  // namespace summ
