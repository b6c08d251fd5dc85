#include "synth_experiment.hpp"

#include <chrono>

#include "summ/corpus.hpp"
#include "summ/synth_eval.hpp"
#include "summ/trainer.hpp"

namespace summ::testing {

RunOutcome run_synthetic(const ExperimentConfig& cfg, Mode mode, std::uint64_t seed, double spurious_rate) {
  const auto t0 = std::chrono::steady_clock::now();
  SynthSpec spec;
  spec.seed = cfg.data_seed;
  spec.num_pairs = cfg.train_pairs;
  spec.spurious_rate = spurious_rate;
  spec.split = Split::Train;
  const auto train_corpus = synth_corpus(spec);
  spec.spurious_rate = 0;
  spec.num_pairs = cfg.dev_pairs;
  spec.split = Split::Dev;
  const auto dev_corpus = synth_corpus(spec);
  spec.num_pairs = cfg.test_pairs;
  spec.split = Split::Test;
  const auto test_corpus = synth_corpus(spec);

  const auto vocab = build_vocab(train_corpus.pairs, TokenPolicy::Characters);
  TrainData data;
  data.vocab = &vocab;
  data.train = encode_pairs(train_corpus.pairs, vocab);
  data.dev = encode_pairs(dev_corpus.pairs, vocab);
  for (const auto& p : dev_corpus.pairs) data.dev_references.push_back(p.summary);

  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.embedding_size = cfg.embedding_size;
  mc.hidden_size = cfg.hidden_size;
  mc.mode = mode;
  mc.seed = seed;

  TrainConfig tc;
  tc.mode = mode;
  tc.seed = seed;
  tc.epochs_total = cfg.epochs;
  tc.pretrain_epochs = cfg.pretrain;
  tc.batch_size = cfg.batch_size;
  tc.learning_rate = cfg.learning_rate;
  tc.regularizer.tau = cfg.tau;
  tc.regularizer.alpha = cfg.alpha;
  tc.dev_beam_size = cfg.beam_size;
  tc.threads = cfg.threads;

  const auto result = train(init_params(mc), data, tc);
  std::vector<double> dev_scores;
  for (const auto& rec : result.log) dev_scores.push_back(rec.dev.rougeL.recall);
  const auto best = select_best(dev_scores);
  const auto& params = result.checkpoints[best].params;

  RunOutcome out;
  out.mode = mode;
  out.seed = seed;
  out.spurious_rate = spurious_rate;
  out.best_epoch = result.log[best].epoch;

  const auto test = encode_pairs(test_corpus.pairs, vocab);
  out.test_accuracy = token_accuracy(params, test, cfg.beam_size, 30).accuracy();

  std::vector<std::size_t> clean_idx;
  std::vector<EncodedPair> clean_pairs;
  for (std::size_t i = 0; i < train_corpus.pairs.size(); ++i)
    if (train_corpus.clean[i]) {
      clean_idx.push_back(i);
      clean_pairs.push_back(data.train[i]);
    }
  const auto sets = consistent_sets(train_corpus, clean_idx, vocab);
  const auto rel = bijection_consistency(params, clean_pairs, sets);
  out.consistent_mass = rel.consistent_mass;
  out.diagonal_mass = rel.diagonal_mass;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace summ::testing
