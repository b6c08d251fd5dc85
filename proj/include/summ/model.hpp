#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "summ/autodiff.hpp"
#include "summ/tensor.hpp"
#include "summ/tokens.hpp"

namespace summ {

enum class Mode { Baseline, SelfTrain, DualTrain };
enum class AttentionKind { Additive, Multiplicative };

std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view s);
std::string_view attention_name(AttentionKind k);
AttentionKind parse_attention(std::string_view s);

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embedding_size = 400;
  std::size_t hidden_size = 500;
  // Width of the additive-attention scoring layer; 0 means hidden_size.
  std::size_t attention_size = 0;
  Mode mode = Mode::Baseline;
  AttentionKind attention = AttentionKind::Additive;
  std::uint64_t seed = 0;

  std::size_t attention_width() const { return attention_size ? attention_size : hidden_size; }
  bool has_second_head() const { return mode == Mode::DualTrain; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Parameter names, stable across runs and used as checkpoint keys.
namespace keys {
inline constexpr const char* kEmbedding = "embedding";
inline constexpr const char* kEncoderW = "encoder.w";
inline constexpr const char* kEncoderB = "encoder.b";
inline constexpr const char* kDecoderW = "decoder.w";
inline constexpr const char* kDecoderB = "decoder.b";
inline constexpr const char* kAttnDec = "attention.w_dec";
inline constexpr const char* kAttnEnc = "attention.w_enc";
inline constexpr const char* kAttnV = "attention.v";
inline constexpr const char* kAttnBilinear = "attention.w";
inline constexpr const char* kHead1W = "head1.w";
inline constexpr const char* kHead1B = "head1.b";
inline constexpr const char* kHead2W = "head2.w";
inline constexpr const char* kHead2B = "head2.b";
}  // namespace keys

struct ModelParams {
  ModelConfig config;
  std::map<std::string, Tensor> tensors;

  Tensor& at(const std::string& key);
  const Tensor& at(const std::string& key) const;
  bool has(const std::string& key) const { return tensors.count(key) != 0; }
  std::size_t num_scalars() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Uniform(-0.08, 0.08) from a seeded generator. Tensors are drawn in a fixed
// order with the second head last, so it never shares stream positions with
// the first.
ModelParams init_params(const ModelConfig& config);

struct LstmState {
  Var h;
  Var c;
};

struct Encoded {
  std::vector<Var> states;  // one hidden vector per source position
  Var memory;               // states stacked, [S, H]
  Var keys;                 // additive attention projections of memory, [S, A]
  LstmState final;
};

struct StepOutput {
  Var logits_head1;
  std::optional<Var> logits_head2;
  LstmState state;
  Var attention;  // distribution over source positions
  Var attended;   // [cell output ; context], input of both heads
};

// Binds a ModelParams into one Graph and builds forward computations on it.
// Heads read the concatenation of the decoder cell output and the attention
// context; there is no input feeding.
class Seq2Seq {
 public:
  struct Options {
    // When false, head 2 sees a detached copy of the shared representation,
    // so its hard loss updates only its own projection.
    bool head2_updates_shared = true;
  };

  Seq2Seq(Graph& graph, const ModelParams& params);
  Seq2Seq(Graph& graph, const ModelParams& params, Options options);

  Encoded encode(std::span<const TokenId> source);
  StepOutput decode_step(const LstmState& state, TokenId prev_token, const Encoded& encoded);
  // Step t conditions on target[t] and predicts target[t + 1].
  std::vector<StepOutput> teacher_forced(std::span<const TokenId> source, std::span<const TokenId> target);
  std::vector<StepOutput> teacher_forced(const Encoded& encoded, std::span<const TokenId> target);

  Graph& graph() { return graph_; }
  const ModelConfig& config() const { return params_.config; }
  // Graph leaf bound to a parameter key.
  Var param(const std::string& key) const;

 private:
  LstmState lstm(Var w, Var b, Var input, const LstmState& prev);
  void check_token(TokenId id) const;

  Graph& graph_;
  const ModelParams& params_;
  Options options_;
  std::map<std::string, Var> bound_;
  Var embedding_, enc_w_, enc_b_, dec_w_, dec_b_;
  Var attn_dec_, attn_enc_, attn_v_, attn_bilinear_;
  Var head1_w_, head1_b_;
  std::optional<Var> head2_w_, head2_b_;
};

}  // namespace summ
