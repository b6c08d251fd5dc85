#include "summ/rouge.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "summ/corpus.hpp"

namespace summ {

RougeValue RougeValue::from_counts(std::size_t overlap, std::size_t ref_total, std::size_t cand_total) {
  RougeValue v;
  v.recall = ref_total ? static_cast<double>(overlap) / static_cast<double>(ref_total) : 0.0;
  v.precision = cand_total ? static_cast<double>(overlap) / static_cast<double>(cand_total) : 0.0;
  v.f1 = v.recall + v.precision > 0 ? 2 * v.recall * v.precision / (v.recall + v.precision) : 0.0;
  return v;
}

std::vector<std::string> rouge_units(std::string_view text) { return tokenize(text, TokenPolicy::Characters); }

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(std::span<const std::string> units, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (units.size() < n) return counts;
  for (std::size_t i = 0; i + n <= units.size(); ++i) ++counts[std::vector<std::string>(units.begin() + i, units.begin() + i + n)];
  return counts;
}

}  // namespace

std::optional<RougeValue> rouge_n_units(std::span<const std::string> candidate, std::span<const std::string> reference,
                                        std::size_t n) {
  if (n == 0) throw std::invalid_argument("rouge_n: n must be >= 1");
  if (reference.size() < n) return std::nullopt;
  const auto ref = ngram_counts(reference, n);
  const auto cand = ngram_counts(candidate, n);
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  const std::size_t ref_total = reference.size() - n + 1;
  const std::size_t cand_total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  return RougeValue::from_counts(overlap, ref_total, cand_total);
}

std::optional<RougeValue> rouge_n(std::string_view candidate, std::string_view reference, std::size_t n) {
  const auto c = rouge_units(candidate);
  const auto r = rouge_units(reference);
  return rouge_n_units(c, r, n);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeLResult rouge_l_units(std::span<const std::string> candidate, std::span<const std::string> reference) {
  RougeLResult r;
  if (candidate.empty() || reference.empty()) {
    r.empty_input = true;
    return r;
  }
  r.lcs = lcs_length(candidate, reference);
  r.value = RougeValue::from_counts(r.lcs, reference.size(), candidate.size());
  return r;
}

RougeLResult rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = rouge_units(candidate);
  const auto r = rouge_units(reference);
  return rouge_l_units(c, r);
}

PairRouge score_pair(std::string_view candidate, std::string_view reference) {
  const auto c = rouge_units(candidate);
  const auto r = rouge_units(reference);
  return {rouge_n_units(c, r, 1), rouge_n_units(c, r, 2), rouge_l_units(c, r)};
}

namespace {

double sorted_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += x;
  return s;
}

struct MeanAcc {
  std::vector<double> r, p, f;
  void add(const RougeValue& v) {
    r.push_back(v.recall);
    p.push_back(v.precision);
    f.push_back(v.f1);
  }
  RougeValue mean() const {
    RougeValue out;
    if (r.empty()) return out;
    const double n = static_cast<double>(r.size());
    out.recall = sorted_sum(r) / n;
    out.precision = sorted_sum(p) / n;
    out.f1 = sorted_sum(f) / n;
    return out;
  }
};

}  // namespace

RougeScore aggregate_rouge(std::span<const PairRouge> scores) {
  RougeScore s;
  s.pairs = scores.size();
  MeanAcc a1, a2, al;
  for (const auto& p : scores) {
    if (p.rouge1) a1.add(*p.rouge1);
    else ++s.skipped_rouge1;
    if (p.rouge2) a2.add(*p.rouge2);
    else ++s.skipped_rouge2;
    if (p.rougeL.empty_input) ++s.empty_rougeL;
    al.add(p.rougeL.value);
  }
  s.rouge1 = a1.mean();
  s.rouge2 = a2.mean();
  s.rougeL = al.mean();
  return s;
}

RougeScore corpus_rouge(std::span<const std::string> candidates, std::span<const std::string> references) {
  if (candidates.size() != references.size())
    throw std::invalid_argument("corpus_rouge: " + std::to_string(candidates.size()) + " candidates vs " +
                                std::to_string(references.size()) + " references");
  std::vector<PairRouge> per;
  per.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) per.push_back(score_pair(candidates[i], references[i]));
  return aggregate_rouge(per);
}

}  // namespace summ
