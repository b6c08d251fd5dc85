#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "summ/checkpoint.hpp"
#include "summ/corpus.hpp"
#include "summ/model.hpp"
#include "summ/objectives.hpp"
#include "summ/rouge.hpp"

namespace summ {

using GradMap = std::map<std::string, Tensor>;

struct TrainConfig {
  std::size_t epochs_total = 10;
  std::size_t pretrain_epochs = 5;
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  double beta_first_moment = 0.9;
  double beta_second_moment = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping
  Mode mode = Mode::Baseline;
  RegularizerConfig regularizer;
  // Whether head 2's hard loss reaches the shared encoder/decoder.
  bool head2_updates_shared = true;
  std::uint64_t seed = 0;
  // Sort windows of batch_size * bucket_window pairs by source length.
  std::size_t bucket_window = 8;
  std::size_t dev_beam_size = 5;
  std::size_t dev_max_len = 30;
  std::size_t threads = 1;

  void validate() const;
};

struct OptimizerState {
  GradMap first_moment;
  GradMap second_moment;
  std::uint64_t step = 0;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& key)
      : std::runtime_error("non-finite gradient for parameter '" + key + "'"), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Bias-corrected Adam. Rejects the whole step, leaving params and state
// untouched, if any gradient is non-finite.
void adam_step(ModelParams& params, const GradMap& grads, OptimizerState& state, const TrainConfig& config);

// Scales grads in place so their global L2 norm is at most max_norm.
// Returns the norm before scaling.
double clip_global_norm(GradMap& grads, double max_norm);

struct LossBreakdown {
  double total = 0;  // mean over sequences of (head1 + head2)
  double head1 = 0;
  double head2 = 0;
};

struct ObjectiveOptions {
  Mode mode = Mode::Baseline;
  RegularizerConfig regularizer;
  bool soft_active = true;  // false during pretraining
  bool head2_updates_shared = true;
};

// Per-sequence loss (summed over time steps) on an existing graph.
struct SequenceLoss {
  Var total;
  Var head1;
  std::optional<Var> head2;
};
SequenceLoss sequence_loss(Seq2Seq& model, const EncodedPair& pair, const ObjectiveOptions& opts);

// Mean over the batch of per-sequence losses, with gradients. Example
// gradients are reduced in batch order regardless of `threads`.
LossBreakdown batch_gradients(const ModelParams& params, std::span<const EncodedPair> batch,
                              const ObjectiveOptions& opts, GradMap& grads, std::size_t threads = 1);
LossBreakdown batch_loss(const ModelParams& params, std::span<const EncodedPair> batch, const ObjectiveOptions& opts);

struct EpochRecord {
  std::size_t epoch = 0;
  bool soft_objective = false;
  double loss_head1 = 0;
  double loss_head2 = 0;
  RougeScore dev;
  double wall_seconds = 0;
  std::uint64_t anneal_calls = 0;
  std::uint64_t steps = 0;

  std::string to_json() const;
};

struct TrainData {
  std::vector<EncodedPair> train;
  std::vector<EncodedPair> dev;
  std::vector<std::string> dev_references;
  const Vocab* vocab = nullptr;  // for detokenizing dev output
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;  // one per epoch
  std::vector<EpochRecord> log;
  std::vector<double> step_losses;
  OptimizerState optimizer;
};

using EpochCallback = std::function<void(const EpochRecord&, const Checkpoint&)>;

// Epochs 1..pretrain_epochs train on hard targets only (both heads in
// DualTrain); later epochs apply the mode's full objective.
TrainResult train(ModelParams params, const TrainData& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Batches for one epoch: seeded shuffle, windowed sort by source length,
// then a shuffle of the batch order.
std::vector<std::vector<std::size_t>> make_batches(std::span<const EncodedPair> pairs, const TrainConfig& config,
                                                   std::size_t epoch);

// Decodes every pair and scores against references with character ROUGE.
RougeScore evaluate_rouge(const ModelParams& params, std::span<const EncodedPair> pairs,
                          std::span<const std::string> references, const Vocab& vocab, std::size_t beam_size,
                          std::size_t max_len);

// Index of the highest score; ties keep the earliest.
std::size_t select_best(std::span<const double> scores);
// Checkpoint with the best dev ROUGE-L recall.
std::size_t select_best_checkpoint(std::span<const Checkpoint> checkpoints, std::span<const EncodedPair> dev,
                                   std::span<const std::string> references, const Vocab& vocab,
                                   std::size_t beam_size = 5, std::size_t max_len = 30);

}  // namespace summ
