#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "summ/autodiff.hpp"
#include "summ/tokens.hpp"

namespace summ {

// Probabilities are floored here before every log.
inline constexpr Real kProbFloor = 1e-12;

struct RegularizerConfig {
  double tau = 2.0;
  double alpha = 1.0;
  // The annealed soft target is treated as a constant; clearing this turns
  // the soft term into a differentiable entropy-style penalty.
  bool detach_soft_target = true;

  void validate() const;
};

// A probability vector: entries in [0, 1] summing to 1 within 1e-6.
class Distribution {
 public:
  explicit Distribution(std::vector<Real> probs);
  static Distribution uniform(std::size_t n);
  static Distribution one_hot(std::size_t n, std::size_t index);

  std::span<const Real> probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  Real operator[](std::size_t i) const { return probs_[i]; }

 private:
  std::vector<Real> probs_;
};

// Graph forms. `probs` arguments are distributions produced by softmax or
// anneal on the same graph.

// softmax(logits / tau); rank order of the logits is preserved.
Var anneal(Graph& g, Var logits, Real tau);
// -log max(probs[label], floor)
Var hard_ce(Graph& g, Var probs, TokenId label);
// -sum_i target_i log max(probs_i, floor). Detach `target` first for
// target semantics.
Var soft_ce(Graph& g, Var probs, Var target);
// hard_ce(softmax(z), l) + alpha * soft_ce(softmax(z), anneal(z, tau))
Var self_train_loss(Graph& g, Var logits, TokenId label, const RegularizerConfig& cfg);

struct DualLosses {
  Var head1;  // hard + alpha * soft_ce(softmax(z1), anneal(z2, tau))
  Var head2;  // hard only
};
DualLosses dual_train_losses(Graph& g, Var logits1, Var logits2, TokenId label, const RegularizerConfig& cfg);

// Value forms of the same computations.
Distribution anneal(std::span<const Real> logits, Real tau);
Distribution softmax(std::span<const Real> logits);
Real hard_ce(const Distribution& dist, TokenId label);
Real soft_ce(const Distribution& dist, const Distribution& target);
Real self_train_loss(std::span<const Real> logits, TokenId label, const RegularizerConfig& cfg);
std::pair<Real, Real> dual_train_losses(std::span<const Real> logits1, std::span<const Real> logits2, TokenId label,
                                        const RegularizerConfig& cfg);

// Number of anneal() graph calls made on this thread. Lets callers assert
// that a code path never touched the soft target.
std::uint64_t anneal_invocations();

}  // namespace summ
