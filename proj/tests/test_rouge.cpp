#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"
#include "summ/rouge.hpp"

using namespace summ;
using namespace summ::testing;

namespace {

std::string join(const std::vector<std::string>& units) {
  std::string s;
  for (const auto& u : units) s += u;
  return s;
}

}  // namespace

TEST_CASE("rouge-n examples") {
  const auto same = rouge_n("abc", "abc", 2);
  REQUIRE(same);
  CHECK(same->recall == 1);
  CHECK(same->precision == 1);
  CHECK(same->f1 == 1);
  const auto r = rouge_n("ab", "abc", 1);
  REQUIRE(r);
  CHECK(r->recall == doctest::Approx(2.0 / 3));
  CHECK(r->precision == 1);
  CHECK(r->f1 == doctest::Approx(0.8));
  const auto disjoint = rouge_n("xyz", "abc", 1);
  CHECK(*disjoint == RougeValue{});
  CHECK_FALSE(rouge_n("ab", "a", 2).has_value());
  CHECK_THROWS(rouge_n("a", "a", 0));
}

TEST_CASE("rouge-n clips repeated n-grams") {
  const auto r = rouge_n("aaaa", "aab", 1);
  REQUIRE(r);
  CHECK(r->recall == doctest::Approx(2.0 / 3));
  CHECK(r->precision == doctest::Approx(0.5));
}

TEST_CASE("character units drop whitespace and keep punctuation") {
  CHECK(rouge_units("中 文，a\tb") == std::vector<std::string>{"中", "文", "，", "a", "b"});
  const auto r = rouge_n("a b", "ab", 2);
  REQUIRE(r);
  CHECK(r->recall == 1);
}

TEST_CASE("rouge-l examples") {
  auto r = rouge_l("ace", "abcde");
  CHECK(r.lcs == 3);
  CHECK(r.value.recall == doctest::Approx(0.6));
  CHECK(r.value.precision == 1);
  r = rouge_l("abcde", "abcde");
  CHECK(r.value.f1 == 1);
  r = rouge_l("edcba", "abcde");
  CHECK(r.lcs == 1);
  CHECK(r.value.recall == doctest::Approx(0.2));
  r = rouge_l("", "abc");
  CHECK(r.empty_input);
  CHECK(r.value == RougeValue{});
}

TEST_CASE("f1 is zero when nothing overlaps") {
  CHECK(RougeValue::from_counts(0, 3, 4).f1 == 0);
  CHECK(RougeValue::from_counts(0, 0, 0) == RougeValue{});
}

TEST_CASE("rouge matches brute-force oracles") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_units(rng, 12, 6);
    const auto b = random_units(rng, 12, 6);
    CAPTURE(join(a));
    CAPTURE(join(b));
    const auto l = rouge_l(join(a), join(b));
    CHECK(l.lcs == lcs_brute_force(a, b));
    CHECK(l.value == RougeValue::from_counts(l.lcs, b.size(), a.size()));
    for (std::size_t n : {1, 2}) {
      const auto r = rouge_n(join(a), join(b), n);
      if (b.size() < n) {
        CHECK_FALSE(r.has_value());
        continue;
      }
      REQUIRE(r);
      const auto cand_total = a.size() >= n ? a.size() - n + 1 : 0;
      CHECK(*r == RougeValue::from_counts(ngram_overlap_brute_force(a, b, n), b.size() - n + 1, cand_total));
    }
  }
}

TEST_CASE("corpus rouge") {
  const std::vector<std::string> one_c = {"ab"}, one_r = {"abc"};
  const auto single = corpus_rouge(one_c, one_r);
  CHECK(single.pairs == 1);
  CHECK(single.rouge1 == *rouge_n("ab", "abc", 1));
  const std::vector<std::string> cands = {"abc", "xyz"}, refs = {"abc", "abc"};
  const auto two = corpus_rouge(cands, refs);
  CHECK(two.rouge1.recall == doctest::Approx(0.5));
  CHECK(two.rougeL.recall == doctest::Approx(0.5));
  const std::vector<std::string> short_refs = {"abc", "a"};
  const auto skipped = corpus_rouge(cands, short_refs);
  CHECK(skipped.skipped_rouge2 == 1);
  CHECK(skipped.rouge2.recall == 1);
  CHECK_THROWS(corpus_rouge(cands, one_r));
}

TEST_CASE("corpus rouge is permutation invariant") {
  Rng rng(12);
  std::vector<std::string> cands, refs;
  for (int i = 0; i < 40; ++i) {
    cands.push_back(join(random_units(rng, 20, 7)));
    refs.push_back(join(random_units(rng, 20, 7)));
  }
  const auto base = corpus_rouge(cands, refs);
  std::vector<std::size_t> order(cands.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int t = 0; t < 10; ++t) {
    rng.shuffle(order);
    std::vector<std::string> c2, r2;
    for (auto i : order) {
      c2.push_back(cands[i]);
      r2.push_back(refs[i]);
    }
    const auto s = corpus_rouge(c2, r2);
    CHECK(s.rouge1 == base.rouge1);
    CHECK(s.rouge2 == base.rouge2);
    CHECK(s.rougeL == base.rougeL);
  }
}
