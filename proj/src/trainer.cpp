#include "summ/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include <json.hpp>

#include "summ/beam.hpp"
#include "summ/random.hpp"

namespace summ {

void TrainConfig::validate() const {
  if (epochs_total == 0) throw std::invalid_argument("epochs_total must be >= 1");
  if (pretrain_epochs > epochs_total) throw std::invalid_argument("pretrain_epochs must not exceed epochs_total");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (!(beta_first_moment > 0 && beta_first_moment < 1)) throw std::invalid_argument("beta_first_moment must be in (0,1)");
  if (!(beta_second_moment > 0 && beta_second_moment < 1))
    throw std::invalid_argument("beta_second_moment must be in (0,1)");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be > 0");
  if (bucket_window == 0) throw std::invalid_argument("bucket_window must be >= 1");
  regularizer.validate();
}

void adam_step(ModelParams& params, const GradMap& grads, OptimizerState& state, const TrainConfig& config) {
  for (const auto& [key, g] : grads) {
    if (!params.has(key)) throw std::invalid_argument("gradient for unknown parameter '" + key + "'");
    if (g.shape() != params.at(key).shape())
      throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match parameter '" + key + "'");
    if (!g.all_finite()) throw NonFiniteGradient(key);
  }
  const double b1 = config.beta_first_moment, b2 = config.beta_second_moment;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1 - std::pow(b1, t);
  const double c2 = 1 - std::pow(b2, t);
  for (const auto& [key, g] : grads) {
    Tensor& theta = params.at(key);
    auto [mit, m_new] = state.first_moment.try_emplace(key, theta.shape());
    auto [vit, v_new] = state.second_moment.try_emplace(key, theta.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1 - b1) * gi;
      const double vi = b2 * v[i] + (1 - b2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double mhat = mi / c1;
      const double vhat = vi / c2;
      theta[i] = static_cast<Real>(theta[i] - config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon));
    }
  }
}

double clip_global_norm(GradMap& grads, double max_norm) {
  double sq = 0;
  for (const auto& [k, g] : grads)
    for (auto x : g.data()) sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const auto s = static_cast<Real>(max_norm / norm);
    for (auto& [k, g] : grads)
      for (auto& x : g.storage()) x *= s;
  }
  return norm;
}

SequenceLoss sequence_loss(Seq2Seq& model, const EncodedPair& pair, const ObjectiveOptions& opts) {
  Graph& g = model.graph();
  const auto steps = model.teacher_forced(pair.source, pair.target);
  const bool dual = opts.mode == Mode::DualTrain;
  std::vector<Var> h1, h2;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const TokenId gold = pair.target[t + 1];
    const auto& s = steps[t];
    if (dual) {
      if (opts.soft_active) {
        auto l = dual_train_losses(g, s.logits_head1, *s.logits_head2, gold, opts.regularizer);
        h1.push_back(l.head1);
        h2.push_back(l.head2);
      } else {
        h1.push_back(hard_ce(g, g.softmax(s.logits_head1), gold));
        h2.push_back(hard_ce(g, g.softmax(*s.logits_head2), gold));
      }
    } else if (opts.mode == Mode::SelfTrain && opts.soft_active) {
      h1.push_back(self_train_loss(g, s.logits_head1, gold, opts.regularizer));
    } else {
      h1.push_back(hard_ce(g, g.softmax(s.logits_head1), gold));
    }
  }
  SequenceLoss out;
  out.head1 = g.sum(g.concat(h1));
  if (dual) {
    out.head2 = g.sum(g.concat(h2));
    out.total = g.add(out.head1, *out.head2);
  } else {
    out.total = out.head1;
  }
  return out;
}

namespace {

struct ExampleResult {
  double total = 0, head1 = 0, head2 = 0;
  GradMap grads;
};

ExampleResult example_gradients(const ModelParams& params, const EncodedPair& pair, const ObjectiveOptions& opts) {
  Graph g;
  Seq2Seq model(g, params, {opts.head2_updates_shared});
  auto loss = sequence_loss(model, pair, opts);
  ExampleResult r;
  r.total = loss.total.value().item();
  r.head1 = loss.head1.value().item();
  r.head2 = loss.head2 ? loss.head2->value().item() : 0.0;
  g.backward(loss.total);
  for (const auto& [key, t] : params.tensors) r.grads.emplace(key, g.grad(model.param(key)));
  return r;
}

void check_ids(std::span<const EncodedPair> pairs, std::size_t vocab) {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto bad = [vocab](TokenId t) { return t >= vocab; };
    if (pairs[i].source.empty()) throw std::invalid_argument("pair " + std::to_string(i) + " has an empty source");
    if (std::any_of(pairs[i].source.begin(), pairs[i].source.end(), bad) ||
        std::any_of(pairs[i].target.begin(), pairs[i].target.end(), bad))
      throw std::invalid_argument("pair " + std::to_string(i) + " contains ids outside the vocabulary");
  }
}

}  // namespace

LossBreakdown batch_gradients(const ModelParams& params, std::span<const EncodedPair> batch,
                              const ObjectiveOptions& opts, GradMap& grads, std::size_t threads) {
  if (batch.empty()) throw std::invalid_argument("batch_gradients: empty batch");
  std::vector<ExampleResult> results(batch.size());
  threads = std::max<std::size_t>(1, std::min(threads, batch.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) results[i] = example_gradients(params, batch[i], opts);
  } else {
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < threads; ++w)
      workers.emplace_back([&, w] {
        for (std::size_t i = w; i < batch.size(); i += threads) results[i] = example_gradients(params, batch[i], opts);
      });
    for (auto& w : workers) w.join();
  }
  grads.clear();
  for (const auto& [key, t] : params.tensors) grads.emplace(key, Tensor(t.shape()));
  LossBreakdown lb;
  const auto inv = static_cast<Real>(1.0 / static_cast<double>(batch.size()));
  for (auto& r : results) {
    lb.total += r.total;
    lb.head1 += r.head1;
    lb.head2 += r.head2;
    for (auto& [key, g] : r.grads) grads.at(key).axpy(inv, g);
  }
  const double n = static_cast<double>(batch.size());
  lb.total /= n;
  lb.head1 /= n;
  lb.head2 /= n;
  return lb;
}

LossBreakdown batch_loss(const ModelParams& params, std::span<const EncodedPair> batch, const ObjectiveOptions& opts) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  LossBreakdown lb;
  for (const auto& p : batch) {
    Graph g;
    Seq2Seq model(g, params, {opts.head2_updates_shared});
    auto loss = sequence_loss(model, p, opts);
    lb.total += loss.total.value().item();
    lb.head1 += loss.head1.value().item();
    lb.head2 += loss.head2 ? loss.head2->value().item() : 0.0;
  }
  const double n = static_cast<double>(batch.size());
  lb.total /= n;
  lb.head1 /= n;
  lb.head2 /= n;
  return lb;
}

std::string EpochRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["phase"] = soft_objective ? "regularized" : "pretrain";
  j["soft_objective"] = soft_objective;
  j["loss_head1"] = loss_head1;
  j["loss_head2"] = loss_head2;
  j["dev_rouge1"] = dev.rouge1.recall;
  j["dev_rouge2"] = dev.rouge2.recall;
  j["dev_rougeL"] = dev.rougeL.recall;
  j["dev_rougeL_f1"] = dev.rougeL.f1;
  j["steps"] = steps;
  j["wall_seconds"] = wall_seconds;
  return j.dump();
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const EncodedPair> pairs, const TrainConfig& config,
                                                   std::size_t epoch) {
  Rng rng(config.seed, 1000 + epoch);
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const std::size_t window = config.batch_size * config.bucket_window;
  for (std::size_t b = 0; b < order.size(); b += window) {
    const auto e = std::min(order.size(), b + window);
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(b), order.begin() + static_cast<std::ptrdiff_t>(e),
                     [&](std::size_t x, std::size_t y) { return pairs[x].source.size() < pairs[y].source.size(); });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < order.size(); b += config.batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + config.batch_size)));
  rng.shuffle(batches);
  return batches;
}

RougeScore evaluate_rouge(const ModelParams& params, std::span<const EncodedPair> pairs,
                          std::span<const std::string> references, const Vocab& vocab, std::size_t beam_size,
                          std::size_t max_len) {
  std::vector<std::string> outputs;
  outputs.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto d = beam_search(params, p.source, {beam_size, max_len, false});
    outputs.push_back(vocab.decode(d.tokens));
  }
  return corpus_rouge(outputs, references);
}

TrainResult train(ModelParams params, const TrainData& data, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (data.train.empty()) throw std::invalid_argument("train: empty training corpus");
  if (params.config.mode != config.mode)
    throw std::invalid_argument("train: model mode " + std::string(mode_name(params.config.mode)) +
                                " differs from training mode " + std::string(mode_name(config.mode)));
  check_ids(data.train, params.config.vocab_size);
  check_ids(data.dev, params.config.vocab_size);
  const bool score_dev = !data.dev.empty() && data.vocab != nullptr;
  if (score_dev && data.dev_references.size() != data.dev.size())
    throw std::invalid_argument("train: dev references misaligned with dev pairs");

  TrainResult result;
  OptimizerState& opt = result.optimizer;
  GradMap grads;
  for (std::size_t epoch = 1; epoch <= config.epochs_total; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    ObjectiveOptions opts{config.mode, config.regularizer, epoch > config.pretrain_epochs, config.head2_updates_shared};
    const auto anneal_before = anneal_invocations();
    double sum1 = 0, sum2 = 0;
    std::size_t seqs = 0;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.soft_objective = opts.soft_active && config.mode != Mode::Baseline;

    for (const auto& idx : make_batches(data.train, config, epoch)) {
      std::vector<EncodedPair> batch;
      batch.reserve(idx.size());
      for (auto i : idx) batch.push_back(data.train[i]);
      const auto lb = batch_gradients(params, batch, opts, grads, config.threads);
      clip_global_norm(grads, config.clip_norm);
      adam_step(params, grads, opt, config);
      result.step_losses.push_back(lb.total);
      sum1 += lb.head1 * static_cast<double>(batch.size());
      sum2 += lb.head2 * static_cast<double>(batch.size());
      seqs += batch.size();
      ++rec.steps;
    }
    rec.anneal_calls = anneal_invocations() - anneal_before;
    if (!opts.soft_active && rec.anneal_calls != 0)
      throw std::logic_error("soft-target path ran during pretraining epoch " + std::to_string(epoch));
    rec.loss_head1 = sum1 / static_cast<double>(seqs);
    rec.loss_head2 = sum2 / static_cast<double>(seqs);
    if (score_dev)
      rec.dev = evaluate_rouge(params, data.dev, data.dev_references, *data.vocab, config.dev_beam_size,
                               config.dev_max_len);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    Checkpoint ck{params, {epoch, opt.step}};
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec, ck);
    result.checkpoints.push_back(std::move(ck));
  }
  return result;
}

std::size_t select_best(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("select_best: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

std::size_t select_best_checkpoint(std::span<const Checkpoint> checkpoints, std::span<const EncodedPair> dev,
                                   std::span<const std::string> references, const Vocab& vocab, std::size_t beam_size,
                                   std::size_t max_len) {
  if (checkpoints.empty()) throw std::invalid_argument("select_best_checkpoint: no checkpoints");
  if (dev.empty()) throw std::invalid_argument("select_best_checkpoint: empty dev corpus");
  std::vector<double> scores;
  for (const auto& ck : checkpoints)
    scores.push_back(evaluate_rouge(ck.params, dev, references, vocab, beam_size, max_len).rougeL.recall);
  return select_best(scores);
}

}  // namespace summ
