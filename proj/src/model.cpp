#include "summ/model.hpp"

#include <stdexcept>
#include <utility>

#include "summ/random.hpp"

namespace summ {

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Baseline: return "baseline";
    case Mode::SelfTrain: return "self";
    case Mode::DualTrain: return "dual";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  if (s == "baseline") return Mode::Baseline;
  if (s == "self" || s == "self-train") return Mode::SelfTrain;
  if (s == "dual" || s == "dual-train") return Mode::DualTrain;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "' (expected baseline|self|dual)");
}

std::string_view attention_name(AttentionKind k) {
  return k == AttentionKind::Additive ? "additive" : "multiplicative";
}

AttentionKind parse_attention(std::string_view s) {
  if (s == "additive") return AttentionKind::Additive;
  if (s == "multiplicative") return AttentionKind::Multiplicative;
  throw std::invalid_argument("unknown attention '" + std::string(s) + "' (expected additive|multiplicative)");
}

void ModelConfig::validate() const {
  if (vocab_size <= kNumSpecial) throw std::invalid_argument("vocab_size must exceed the reserved ids");
  if (embedding_size == 0 || hidden_size == 0) throw std::invalid_argument("model sizes must be >= 1");
}

Tensor& ModelParams::at(const std::string& key) {
  auto it = tensors.find(key);
  if (it == tensors.end()) throw std::out_of_range("no parameter '" + key + "'");
  return it->second;
}

const Tensor& ModelParams::at(const std::string& key) const {
  auto it = tensors.find(key);
  if (it == tensors.end()) throw std::out_of_range("no parameter '" + key + "'");
  return it->second;
}

std::size_t ModelParams::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [k, t] : tensors) n += t.size();
  return n;
}

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  const std::size_t m = config.vocab_size, e = config.embedding_size, h = config.hidden_size;
  const std::size_t a = config.attention_width();

  std::vector<std::pair<std::string, Shape>> layout = {
      {keys::kEmbedding, {m, e}},
      {keys::kEncoderW, {4 * h, e + h}},
      {keys::kEncoderB, {4 * h}},
      {keys::kDecoderW, {4 * h, e + h}},
      {keys::kDecoderB, {4 * h}},
  };
  if (config.attention == AttentionKind::Additive) {
    layout.push_back({keys::kAttnDec, {a, h}});
    layout.push_back({keys::kAttnEnc, {a, h}});
    layout.push_back({keys::kAttnV, {a}});
  } else {
    layout.push_back({keys::kAttnBilinear, {h, h}});
  }
  layout.push_back({keys::kHead1W, {m, 2 * h}});
  layout.push_back({keys::kHead1B, {m}});
  if (config.has_second_head()) {
    layout.push_back({keys::kHead2W, {m, 2 * h}});
    layout.push_back({keys::kHead2B, {m}});
  }

  Rng rng(config.seed);
  ModelParams p;
  p.config = config;
  for (auto& [key, shape] : layout) {
    Tensor t(shape);
    for (auto& x : t.storage()) x = static_cast<Real>(rng.uniform(-0.08, 0.08));
    p.tensors.emplace(key, std::move(t));
  }
  return p;
}

Seq2Seq::Seq2Seq(Graph& graph, const ModelParams& params) : Seq2Seq(graph, params, Options{}) {}

Seq2Seq::Seq2Seq(Graph& graph, const ModelParams& params, Options options)
    : graph_(graph), params_(params), options_(options) {
  params.config.validate();
  for (const auto& [key, t] : params.tensors) bound_.emplace(key, graph.param(t));
  embedding_ = param(keys::kEmbedding);
  enc_w_ = param(keys::kEncoderW);
  enc_b_ = param(keys::kEncoderB);
  dec_w_ = param(keys::kDecoderW);
  dec_b_ = param(keys::kDecoderB);
  if (params.config.attention == AttentionKind::Additive) {
    attn_dec_ = param(keys::kAttnDec);
    attn_enc_ = param(keys::kAttnEnc);
    attn_v_ = param(keys::kAttnV);
  } else {
    attn_bilinear_ = param(keys::kAttnBilinear);
  }
  head1_w_ = param(keys::kHead1W);
  head1_b_ = param(keys::kHead1B);
  if (params.config.has_second_head()) {
    head2_w_ = param(keys::kHead2W);
    head2_b_ = param(keys::kHead2B);
  }
}

Var Seq2Seq::param(const std::string& key) const {
  auto it = bound_.find(key);
  if (it == bound_.end()) throw std::out_of_range("no parameter '" + key + "'");
  return it->second;
}

void Seq2Seq::check_token(TokenId id) const {
  if (id >= params_.config.vocab_size)
    throw std::invalid_argument("token id " + std::to_string(id) + " out of range for vocab size " +
                                std::to_string(params_.config.vocab_size));
}

LstmState Seq2Seq::lstm(Var w, Var b, Var input, const LstmState& prev) {
  Graph& g = graph_;
  const std::size_t h = params_.config.hidden_size;
  const Var parts[] = {input, prev.h};
  Var gates = g.add(g.matvec(w, g.concat(parts)), b);
  Var in = g.sigmoid(g.slice(gates, 0, h));
  Var forget = g.sigmoid(g.slice(gates, h, h));
  Var out = g.sigmoid(g.slice(gates, 2 * h, h));
  Var cand = g.tanh(g.slice(gates, 3 * h, h));
  Var c = g.add(g.mul(forget, prev.c), g.mul(in, cand));
  Var hidden = g.mul(out, g.tanh(c));
  return {hidden, c};
}

Encoded Seq2Seq::encode(std::span<const TokenId> source) {
  if (source.empty()) throw std::invalid_argument("encode: empty source sequence");
  for (auto id : source) check_token(id);
  Graph& g = graph_;
  const std::size_t h = params_.config.hidden_size;
  LstmState st{g.constant(Tensor({h})), g.constant(Tensor({h}))};
  Encoded enc;
  enc.states.reserve(source.size());
  for (auto id : source) {
    st = lstm(enc_w_, enc_b_, g.lookup(embedding_, id), st);
    enc.states.push_back(st.h);
  }
  enc.memory = g.stack_rows(enc.states);
  if (params_.config.attention == AttentionKind::Additive) enc.keys = g.matmul_nt(enc.memory, attn_enc_);
  enc.final = st;
  return enc;
}

StepOutput Seq2Seq::decode_step(const LstmState& state, TokenId prev_token, const Encoded& encoded) {
  check_token(prev_token);
  const Shape hs{params_.config.hidden_size};
  if (state.h.shape() != hs || state.c.shape() != hs)
    throw ShapeError("decode_step: state shapes " + shape_str(state.h.shape()) + "/" + shape_str(state.c.shape()) +
                     " do not match hidden size " + shape_str(hs));
  Graph& g = graph_;
  StepOutput out;
  out.state = lstm(dec_w_, dec_b_, g.lookup(embedding_, prev_token), state);

  Var scores;
  if (params_.config.attention == AttentionKind::Additive) {
    // v^T tanh(W_dec h + W_enc m_j) for every source position j
    Var query = g.matvec(attn_dec_, out.state.h);
    scores = g.matvec(g.tanh(g.add_row(encoded.keys, query)), attn_v_);
  } else {
    scores = g.matvec(encoded.memory, g.matvec_t(attn_bilinear_, out.state.h));
  }
  out.attention = g.softmax(scores);
  Var context = g.matvec_t(encoded.memory, out.attention);
  const Var parts[] = {out.state.h, context};
  out.attended = g.concat(parts);

  out.logits_head1 = g.add(g.matvec(head1_w_, out.attended), head1_b_);
  if (head2_w_) {
    Var in2 = options_.head2_updates_shared ? out.attended : g.detach(out.attended);
    out.logits_head2 = g.add(g.matvec(*head2_w_, in2), *head2_b_);
  }
  return out;
}

std::vector<StepOutput> Seq2Seq::teacher_forced(std::span<const TokenId> source, std::span<const TokenId> target) {
  return teacher_forced(encode(source), target);
}

std::vector<StepOutput> Seq2Seq::teacher_forced(const Encoded& encoded, std::span<const TokenId> target) {
  if (target.size() < 2 || target.front() != kBos)
    throw std::invalid_argument("teacher_forced: target must start with BOS and have at least two tokens");
  for (auto id : target) check_token(id);
  std::vector<StepOutput> steps;
  steps.reserve(target.size() - 1);
  LstmState st = encoded.final;
  for (std::size_t t = 0; t + 1 < target.size(); ++t) {
    steps.push_back(decode_step(st, target[t], encoded));
    st = steps.back().state;
  }
  return steps;
}

}  // namespace summ
