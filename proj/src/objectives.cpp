#include "summ/objectives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace summ {

namespace {
thread_local std::uint64_t g_anneal_calls = 0;

Var logits_leaf(Graph& g, std::span<const Real> logits) {
  return g.constant(Tensor::vector(std::vector<Real>(logits.begin(), logits.end())));
}
}  // namespace

void RegularizerConfig::validate() const {
  if (!(tau > 0)) throw std::invalid_argument("tau must be > 0, got " + std::to_string(tau));
  if (!(alpha >= 0)) throw std::invalid_argument("alpha must be >= 0, got " + std::to_string(alpha));
}

Distribution::Distribution(std::vector<Real> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw std::invalid_argument("distribution must be non-empty");
  Real s = 0;
  for (auto p : probs_) {
    if (!(p >= 0 && p <= 1)) throw std::invalid_argument("distribution entry outside [0,1]: " + std::to_string(p));
    s += p;
  }
  if (std::abs(s - 1) > 1e-6) throw std::invalid_argument("distribution sums to " + std::to_string(s));
}

Distribution Distribution::uniform(std::size_t n) {
  return Distribution(std::vector<Real>(n, Real(1) / static_cast<Real>(n)));
}

Distribution Distribution::one_hot(std::size_t n, std::size_t index) {
  std::vector<Real> v(n, 0);
  v.at(index) = 1;
  return Distribution(std::move(v));
}

Var anneal(Graph& g, Var logits, Real tau) {
  if (!(tau > 0)) throw std::invalid_argument("anneal: tau must be > 0, got " + std::to_string(tau));
  ++g_anneal_calls;
  return g.softmax(logits, tau);
}

Var hard_ce(Graph& g, Var probs, TokenId label) {
  return g.scale(g.log(g.pick(probs, label), kProbFloor), -1);
}

Var soft_ce(Graph& g, Var probs, Var target) {
  if (probs.shape() != target.shape())
    throw ShapeError("soft_ce: length mismatch " + shape_str(probs.shape()) + " vs " + shape_str(target.shape()));
  return g.scale(g.sum(g.mul(target, g.log(probs, kProbFloor))), -1);
}

Var self_train_loss(Graph& g, Var logits, TokenId label, const RegularizerConfig& cfg) {
  cfg.validate();
  Var probs = g.softmax(logits);
  Var target = anneal(g, logits, static_cast<Real>(cfg.tau));
  if (cfg.detach_soft_target) target = g.detach(target);
  return g.add(hard_ce(g, probs, label), g.scale(soft_ce(g, probs, target), static_cast<Real>(cfg.alpha)));
}

DualLosses dual_train_losses(Graph& g, Var logits1, Var logits2, TokenId label, const RegularizerConfig& cfg) {
  cfg.validate();
  if (logits1.shape() != logits2.shape())
    throw ShapeError("dual_train_losses: head shapes differ " + shape_str(logits1.shape()) + " vs " +
                     shape_str(logits2.shape()));
  Var probs1 = g.softmax(logits1);
  Var probs2 = g.softmax(logits2);
  Var target = anneal(g, logits2, static_cast<Real>(cfg.tau));
  if (cfg.detach_soft_target) target = g.detach(target);
  DualLosses out;
  out.head1 = g.add(hard_ce(g, probs1, label), g.scale(soft_ce(g, probs1, target), static_cast<Real>(cfg.alpha)));
  out.head2 = hard_ce(g, probs2, label);
  return out;
}

Distribution anneal(std::span<const Real> logits, Real tau) {
  Graph g;
  const auto& v = anneal(g, logits_leaf(g, logits), tau).value().storage();
  return Distribution(v);
}

Distribution softmax(std::span<const Real> logits) {
  Graph g;
  return Distribution(g.softmax(logits_leaf(g, logits)).value().storage());
}

Real hard_ce(const Distribution& dist, TokenId label) {
  if (label >= dist.size()) throw std::invalid_argument("hard_ce: label out of range");
  return -std::log(std::max(dist[label], kProbFloor));
}

Real soft_ce(const Distribution& dist, const Distribution& target) {
  if (dist.size() != target.size())
    throw std::invalid_argument("soft_ce: length mismatch " + std::to_string(dist.size()) + " vs " +
                                std::to_string(target.size()));
  Real s = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) s += target[i] * std::log(std::max(dist[i], kProbFloor));
  return -s;
}

Real self_train_loss(std::span<const Real> logits, TokenId label, const RegularizerConfig& cfg) {
  Graph g;
  return self_train_loss(g, logits_leaf(g, logits), label, cfg).value().item();
}

std::pair<Real, Real> dual_train_losses(std::span<const Real> logits1, std::span<const Real> logits2, TokenId label,
                                        const RegularizerConfig& cfg) {
  Graph g;
  auto l = dual_train_losses(g, logits_leaf(g, logits1), logits_leaf(g, logits2), label, cfg);
  return {l.head1.value().item(), l.head2.value().item()};
}

std::uint64_t anneal_invocations() { return g_anneal_calls; }

}  // namespace summ
