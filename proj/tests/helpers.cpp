#include "helpers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "summ/gradcheck.hpp"

namespace summ::testing {

ModelParams tiny_params(Mode mode, std::uint64_t seed, std::size_t vocab, std::size_t embedding, std::size_t hidden) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.embedding_size = embedding;
  c.hidden_size = hidden;
  c.mode = mode;
  c.seed = seed;
  return init_params(c);
}

EncodedPair random_pair(Rng& rng, std::size_t vocab, std::size_t max_len) {
  EncodedPair p;
  const auto content = vocab - kNumSpecial;
  const auto ns = 1 + rng.below(max_len);
  for (std::size_t i = 0; i < ns; ++i) p.source.push_back(static_cast<TokenId>(kNumSpecial + rng.below(content)));
  p.target.push_back(kBos);
  const auto nt = 1 + rng.below(max_len);
  for (std::size_t i = 0; i < nt; ++i) p.target.push_back(static_cast<TokenId>(kNumSpecial + rng.below(content)));
  p.target.push_back(kEos);
  return p;
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  for (const auto& [k, t] : p.tensors)
    for (auto x : t.data()) out.push_back(x);
  return out;
}

void unflatten(ModelParams& p, const std::vector<double>& theta) {
  std::size_t i = 0;
  for (auto& [k, t] : p.tensors)
    for (auto& x : t.storage()) x = static_cast<Real>(theta.at(i++));
}

std::vector<double> flatten(const GradMap& g, const ModelParams& like) {
  std::vector<double> out;
  for (const auto& [k, t] : like.tensors) {
    auto it = g.find(k);
    for (std::size_t i = 0; i < t.size(); ++i) out.push_back(it == g.end() ? 0.0 : it->second[i]);
  }
  return out;
}

namespace {

// log softmax(z / tau) in extended precision.
std::vector<long double> log_softmax_ld(std::span<const long double> z, long double tau = 1) {
  long double mx = z[0] / tau;
  for (auto x : z) mx = std::max(mx, x / tau);
  long double sum = 0;
  for (auto x : z) sum += std::exp(x / tau - mx);
  const long double lse = mx + std::log(sum);
  std::vector<long double> out;
  for (auto x : z) out.push_back(x / tau - lse);
  return out;
}

long double soft_ce_ld(std::span<const long double> logp, std::span<const long double> target_logits, long double tau) {
  const auto lt = log_softmax_ld(target_logits, tau);
  long double s = 0;
  for (std::size_t i = 0; i < logp.size(); ++i)
    s -= std::exp(lt[i]) * std::max(logp[i], static_cast<long double>(std::log(kProbFloor)));
  return s;
}

using LVec = std::vector<long double>;

struct LdSteps {
  std::vector<LVec> head1, head2;
};

LVec matvec_ld(const Tensor& w, const LVec& x) {
  const auto rows = w.shape()[0], cols = w.shape()[1];
  LVec y(rows, 0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) y[i] += static_cast<long double>(w[i * cols + j]) * x[j];
  return y;
}

LVec embed_ld(const Tensor& e, TokenId id) {
  const auto cols = e.shape()[1];
  LVec v(cols);
  for (std::size_t j = 0; j < cols; ++j) v[j] = e[id * cols + j];
  return v;
}

long double sigmoid_ld(long double x) { return 1 / (1 + std::exp(-x)); }

void lstm_ld(const Tensor& w, const Tensor& b, const LVec& input, LVec& h, LVec& c) {
  LVec x = input;
  x.insert(x.end(), h.begin(), h.end());
  auto gates = matvec_ld(w, x);
  const auto n = h.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto ig = sigmoid_ld(gates[i] + b[i]);
    const auto fg = sigmoid_ld(gates[n + i] + b[n + i]);
    const auto og = sigmoid_ld(gates[2 * n + i] + b[2 * n + i]);
    const auto cand = std::tanh(gates[3 * n + i] + b[3 * n + i]);
    c[i] = fg * c[i] + ig * cand;
    h[i] = og * std::tanh(c[i]);
  }
}

LVec head_ld(const Tensor& w, const Tensor& b, const LVec& x) {
  auto y = matvec_ld(w, x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
  return y;
}

// Teacher-forced logits from a direct extended-precision evaluation of the
// model equations, independent of the autodiff graph.
LdSteps forward_ld(const ModelParams& p, std::span<const TokenId> source, std::span<const TokenId> target) {
  const auto hs = p.config.hidden_size;
  const auto& emb = p.at(keys::kEmbedding);
  LVec h(hs, 0), c(hs, 0);
  std::vector<LVec> memory;
  for (auto id : source) {
    lstm_ld(p.at(keys::kEncoderW), p.at(keys::kEncoderB), embed_ld(emb, id), h, c);
    memory.push_back(h);
  }
  const bool additive = p.config.attention == AttentionKind::Additive;
  std::vector<LVec> keys_proj;
  if (additive)
    for (const auto& m : memory) keys_proj.push_back(matvec_ld(p.at(keys::kAttnEnc), m));
  LdSteps out;
  for (std::size_t t = 0; t + 1 < target.size(); ++t) {
    lstm_ld(p.at(keys::kDecoderW), p.at(keys::kDecoderB), embed_ld(emb, target[t]), h, c);
    LVec scores(memory.size(), 0);
    if (additive) {
      const auto q = matvec_ld(p.at(keys::kAttnDec), h);
      const auto& v = p.at(keys::kAttnV);
      for (std::size_t j = 0; j < memory.size(); ++j)
        for (std::size_t a = 0; a < q.size(); ++a) scores[j] += v[a] * std::tanh(keys_proj[j][a] + q[a]);
    } else {
      const auto& w = p.at(keys::kAttnBilinear);
      LVec wt(hs, 0);  // W^T h
      for (std::size_t i = 0; i < hs; ++i)
        for (std::size_t j = 0; j < hs; ++j) wt[j] += static_cast<long double>(w[i * hs + j]) * h[i];
      for (std::size_t j = 0; j < memory.size(); ++j)
        for (std::size_t k = 0; k < hs; ++k) scores[j] += memory[j][k] * wt[k];
    }
    long double mx = scores[0], z = 0;
    for (auto s : scores) mx = std::max(mx, s);
    for (auto& s : scores) z += (s = std::exp(s - mx));
    LVec attended = h;
    attended.resize(2 * hs, 0);
    for (std::size_t j = 0; j < memory.size(); ++j)
      for (std::size_t k = 0; k < hs; ++k) attended[hs + k] += scores[j] / z * memory[j][k];
    out.head1.push_back(head_ld(p.at(keys::kHead1W), p.at(keys::kHead1B), attended));
    if (p.config.has_second_head()) out.head2.push_back(head_ld(p.at(keys::kHead2W), p.at(keys::kHead2B), attended));
  }
  return out;
}

long double frozen_loss_ld(const ModelParams& p, const ModelParams& frozen, std::span<const EncodedPair> batch,
                           const RegularizerConfig& reg, bool soft_active) {
  const Mode mode = p.config.mode;
  long double total = 0;
  for (const auto& pair : batch) {
    const auto steps = forward_ld(p, pair.source, pair.target);
    const auto steps0 = forward_ld(frozen, pair.source, pair.target);
    for (std::size_t t = 0; t < steps.head1.size(); ++t) {
      const TokenId gold = pair.target[t + 1];
      const auto logp1 = log_softmax_ld(steps.head1[t]);
      total -= logp1[gold];
      if (mode == Mode::DualTrain) {
        total -= log_softmax_ld(steps.head2[t])[gold];
        if (soft_active) total += reg.alpha * soft_ce_ld(logp1, steps0.head2[t], reg.tau);
      } else if (mode == Mode::SelfTrain && soft_active) {
        total += reg.alpha * soft_ce_ld(logp1, steps0.head1[t], reg.tau);
      }
    }
  }
  return total / static_cast<long double>(batch.size());
}

}  // namespace

double frozen_target_loss(const ModelParams& p, const ModelParams& frozen, std::span<const EncodedPair> batch,
                          const RegularizerConfig& reg, bool soft_active) {
  return static_cast<double>(frozen_loss_ld(p, frozen, batch, reg, soft_active));
}

GradCheckResult check_model_gradients(const ModelParams& params, std::span<const EncodedPair> batch,
                                      const RegularizerConfig& reg, double step) {
  ObjectiveOptions opts;
  opts.mode = params.config.mode;
  opts.regularizer = reg;
  GradMap grads;
  batch_gradients(params, batch, opts, grads);
  const auto analytic = flatten(grads, params);

  const auto theta0 = flatten(params);
  ModelParams work = params;
  // Differences against the base loss keep the double returned to the
  // finite-difference driver small, so its rounding does not swamp tiny
  // gradients.
  const long double base = frozen_loss_ld(params, params, batch, reg, true);
  const auto numeric = finite_difference_gradient(
      [&](std::span<const double> theta) {
        unflatten(work, std::vector<double>(theta.begin(), theta.end()));
        return static_cast<double>(frozen_loss_ld(work, params, batch, reg, true) - base);
      },
      theta0, step);
  const auto report = compare_gradients(analytic, numeric);

  GradCheckResult r;
  r.max_rel_error = report.max_rel_error;
  r.checked = report.checked;
  std::size_t i = report.worst_index;
  for (const auto& [k, t] : params.tensors) {
    if (i < t.size()) {
      r.worst = k + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic[report.worst_index]) +
                " numeric=" + std::to_string(numeric[report.worst_index]);
      break;
    }
    i -= t.size();
  }
  return r;
}

namespace {

bool is_subsequence(const std::vector<std::string>& sub, const std::vector<std::string>& s) {
  std::size_t i = 0;
  for (std::size_t j = 0; j < s.size() && i < sub.size(); ++j)
    if (sub[i] == s[j]) ++i;
  return i == sub.size();
}

}  // namespace

std::size_t lcs_brute_force(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto& shorter = a.size() <= b.size() ? a : b;
  const auto& longer = a.size() <= b.size() ? b : a;
  if (shorter.size() > 20) throw std::invalid_argument("lcs_brute_force: input too long");
  std::size_t best = 0;
  const std::uint64_t n = std::uint64_t{1} << shorter.size();
  for (std::uint64_t mask = 0; mask < n; ++mask) {
    const auto bits = static_cast<std::size_t>(std::popcount(mask));
    if (bits <= best) continue;
    std::vector<std::string> sub;
    for (std::size_t i = 0; i < shorter.size(); ++i)
      if (mask >> i & 1) sub.push_back(shorter[i]);
    if (is_subsequence(sub, longer)) best = bits;
  }
  return best;
}

std::size_t ngram_overlap_brute_force(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                                      std::size_t n) {
  auto grams = [n](const std::vector<std::string>& s) {
    std::vector<std::vector<std::string>> out;
    for (std::size_t i = 0; i + n <= s.size(); ++i) out.emplace_back(s.begin() + i, s.begin() + i + n);
    return out;
  };
  auto pool = grams(ref);
  std::vector<bool> used(pool.size(), false);
  std::size_t overlap = 0;
  for (const auto& g : grams(cand)) {
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!used[i] && pool[i] == g) {
        used[i] = true;
        ++overlap;
        break;
      }
    }
  }
  return overlap;
}

double sequence_log_prob(const ModelParams& p, std::span<const TokenId> source, std::span<const TokenId> tokens) {
  std::vector<TokenId> target{kBos};
  target.insert(target.end(), tokens.begin(), tokens.end());
  Graph g;
  Seq2Seq m(g, p);
  const auto steps = m.teacher_forced(source, target);
  long double total = 0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto z = steps[t].logits_head1.value().data();
    long double mx = z[0], s = 0;
    for (auto x : z) mx = std::max<long double>(mx, x);
    for (auto x : z) s += std::exp(static_cast<long double>(x) - mx);
    total += z[tokens[t]] - mx - std::log(s);
  }
  return static_cast<double>(total);
}

namespace {

void enumerate(const ModelParams& p, std::span<const TokenId> source, std::vector<TokenId>& prefix, std::size_t max_len,
               BestSequence& best) {
  auto consider = [&](bool append_eos) {
    const double s = sequence_log_prob(p, source, prefix);
    if (best.tokens.empty() || s > best.score) {
      best.score = s;
      best.tokens = {kBos};
      best.tokens.insert(best.tokens.end(), prefix.begin(), prefix.end());
      if (append_eos) best.tokens.push_back(kEos);
    }
  };
  if (prefix.size() == max_len) {
    consider(true);
    return;
  }
  const auto vocab = static_cast<TokenId>(p.config.vocab_size);
  for (TokenId y = kEos; y < vocab; ++y) {
    prefix.push_back(y);
    if (y == kEos)
      consider(false);
    else
      enumerate(p, source, prefix, max_len, best);
    prefix.pop_back();
  }
}

}  // namespace

BestSequence exhaustive_best(const ModelParams& p, std::span<const TokenId> source, std::size_t max_len) {
  BestSequence best;
  std::vector<TokenId> prefix;
  enumerate(p, source, prefix, max_len, best);
  return best;
}

std::vector<std::string> random_units(Rng& rng, std::size_t max_len, std::size_t alphabet) {
  static const char* const kAlphabet[] = {"a", "b", "c", "d", "e", "中", "文", "，"};
  alphabet = std::min<std::size_t>(alphabet, std::size(kAlphabet));
  std::vector<std::string> s(1 + rng.below(max_len));
  for (auto& u : s) u = kAlphabet[rng.below(alphabet)];
  return s;
}

}  // namespace summ::testing
