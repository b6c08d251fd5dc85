#include "summ/beam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace summ {

std::span<const TokenId> Decoded::content() const {
  std::span<const TokenId> s = tokens;
  if (!s.empty() && s.front() == kBos) s = s.subspan(1);
  if (!s.empty() && s.back() == kEos) s = s.first(s.size() - 1);
  return s;
}

std::vector<double> log_softmax(std::span<const Real> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (auto z : logits) mx = std::max(mx, static_cast<double>(z));
  double sum = 0;
  for (auto z : logits) sum += std::exp(static_cast<double>(z) - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - lse;
  return out;
}

namespace {

struct Hyp {
  std::vector<TokenId> tokens;
  double log_prob = 0;
  LstmState state;
};

struct Candidate {
  std::size_t parent;
  TokenId token;
  double score;
};

bool emittable(TokenId t) { return t != kPad && t != kBos; }

double rank_score(const Decoded& d, bool normalize) {
  if (!normalize) return d.log_prob;
  const auto len = std::max<std::size_t>(1, d.tokens.size() - 1 - (d.forced_finish ? 1 : 0));
  return d.log_prob / static_cast<double>(len);
}

}  // namespace

Decoded beam_search(const ModelParams& params, std::span<const TokenId> source, const BeamOptions& options) {
  if (options.beam_size == 0) throw std::invalid_argument("beam_search: beam_size must be >= 1");
  if (options.max_len == 0) throw std::invalid_argument("beam_search: max_len must be >= 1");
  if (source.empty()) throw std::invalid_argument("beam_search: empty source");

  Graph g;
  Seq2Seq model(g, params);
  const Encoded enc = model.encode(source);

  std::vector<Hyp> live{{{kBos}, 0.0, enc.final}};
  std::vector<Decoded> finished;
  double best_finished = -std::numeric_limits<double>::infinity();

  for (std::size_t step = 0; step < options.max_len && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    std::vector<LstmState> next_states;
    next_states.reserve(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      StepOutput out = model.decode_step(live[h].state, live[h].tokens.back(), enc);
      next_states.push_back(out.state);
      const auto lp = log_softmax(out.logits_head1.value().data());
      for (TokenId t = 0; t < lp.size(); ++t)
        if (emittable(t)) cands.push_back({h, t, live[h].log_prob + lp[t]});
    }
    const std::size_t keep = std::min(options.beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent < b.parent;
                      });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = cands[i];
      std::vector<TokenId> toks = live[c.parent].tokens;
      toks.push_back(c.token);
      if (c.token == kEos) {
        finished.push_back({std::move(toks), c.score, false});
        best_finished = std::max(best_finished, c.score);
      } else {
        next.push_back({std::move(toks), c.score, next_states[c.parent]});
      }
    }
    live = std::move(next);
    // Log-probabilities only decrease, so nothing live can overtake the best
    // finished hypothesis under unnormalized scoring.
    if (!options.length_normalize && !live.empty()) {
      double best_live = -std::numeric_limits<double>::infinity();
      for (const auto& h : live) best_live = std::max(best_live, h.log_prob);
      if (best_finished >= best_live) live.clear();
    }
  }
  for (auto& h : live) {
    h.tokens.push_back(kEos);
    finished.push_back({std::move(h.tokens), h.log_prob, true});
  }

  const bool norm = options.length_normalize;
  auto best = std::min_element(finished.begin(), finished.end(), [norm](const Decoded& a, const Decoded& b) {
    const double sa = rank_score(a, norm), sb = rank_score(b, norm);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  });
  return *best;
}

Decoded greedy(const ModelParams& params, std::span<const TokenId> source, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("greedy: max_len must be >= 1");
  if (source.empty()) throw std::invalid_argument("greedy: empty source");
  Graph g;
  Seq2Seq model(g, params);
  const Encoded enc = model.encode(source);
  Decoded d{{kBos}, 0.0, false};
  LstmState st = enc.final;
  for (std::size_t step = 0; step < max_len; ++step) {
    StepOutput out = model.decode_step(st, d.tokens.back(), enc);
    st = out.state;
    const auto lp = log_softmax(out.logits_head1.value().data());
    TokenId arg = kEos;
    double best = -std::numeric_limits<double>::infinity();
    for (TokenId t = 0; t < lp.size(); ++t)
      if (emittable(t) && lp[t] > best) {
        best = lp[t];
        arg = t;
      }
    d.tokens.push_back(arg);
    d.log_prob += best;
    if (arg == kEos) return d;
  }
  d.tokens.push_back(kEos);
  d.forced_finish = true;
  return d;
}

}  // namespace summ
