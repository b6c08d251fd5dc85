#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "summ/eval_session.hpp"
#include "summ/random.hpp"

using namespace summ;
using namespace summ::eval;

namespace {

SessionSpec make_spec(std::size_t n_pairs, std::size_t n_systems, std::vector<std::string> annotators,
                      std::size_t doubled, std::uint64_t seed) {
  SessionSpec s;
  for (std::size_t i = 0; i < n_pairs; ++i)
    s.pairs.push_back({"p" + std::to_string(i), "source " + std::to_string(i), "reference " + std::to_string(i)});
  for (std::size_t k = 0; k < n_systems; ++k) {
    SystemOutputs o{"sys" + std::to_string(k), {}};
    for (std::size_t i = 0; i < n_pairs; ++i) o.candidates.push_back("cand " + std::to_string(k) + "/" + std::to_string(i));
    s.systems.push_back(std::move(o));
  }
  s.annotators = std::move(annotators);
  s.double_subset_size = doubled;
  s.seed = seed;
  return s;
}

Annotation good(const std::string& task, const std::string& who) { return {task, who, Verdict::Good, std::nullopt, ""}; }

Annotation bad(const std::string& task, const std::string& who, Rule r) { return {task, who, Verdict::Bad, r, ""}; }

std::string error_code(auto&& fn) {
  try {
    fn();
  } catch (const EvalError& e) {
    return e.code();
  }
  return "";
}

// Answers every task of `who` with `verdict_of(task)`.
template <typename F>
void drain(Session& s, const std::string& who, F verdict_of) {
  while (auto t = s.next_task(who)) s.submit(verdict_of(t->task_id, who));
}

std::filesystem::path temp_log(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "summ_test_eval";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST_CASE("single annotator receives every task") {
  auto s = Session::create("s", make_spec(6, 3, {"ann"}, 0, 1));
  CHECK(s.tasks().size() == 18);
  for (const auto& t : s.tasks()) CHECK(t.assignees == std::vector<std::string>{"ann"});
  CHECK(s.remaining("ann") == 18);
}

TEST_CASE("tasks sharing a source go to one annotator") {
  const auto s = Session::create("s", make_spec(10, 4, {"a", "b"}, 0, 2));
  std::map<std::size_t, std::set<std::string>> by_pair;
  std::map<std::string, std::size_t> load;
  for (const auto& t : s.tasks()) {
    for (const auto& a : t.assignees) by_pair[t.pair_index].insert(a);
    ++load[t.assignees[0]];
  }
  for (const auto& [pair, who] : by_pair) CHECK(who.size() == 1);
  CHECK(load["a"] == 20);
  CHECK(load["b"] == 20);
}

TEST_CASE("double subset gets two assignees for every system") {
  const auto s = Session::create("s", make_spec(10, 4, {"a", "b", "c"}, 3, 3));
  std::set<std::size_t> doubled;
  for (const auto& t : s.tasks()) {
    CHECK(t.double_annotation == (t.assignees.size() == 2));
    if (t.double_annotation) doubled.insert(t.pair_index);
  }
  CHECK(doubled.size() == 3);
  for (const auto& t : s.tasks())
    if (doubled.count(t.pair_index)) CHECK(t.assignees.size() == 2);
}

TEST_CASE("dispatch constraint over 100 seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto n_pairs = 1 + rng.below(20);
    const auto n_ann = 1 + rng.below(4);
    std::vector<std::string> anns;
    for (std::size_t i = 0; i < n_ann; ++i) anns.push_back("ann" + std::to_string(i));
    const auto doubled = n_ann >= 2 ? rng.below(n_pairs + 1) : 0;
    const auto s = Session::create("s", make_spec(n_pairs, 1 + rng.below(4), anns, doubled, seed));
    std::map<std::size_t, std::set<std::string>> by_pair;
    std::map<std::size_t, bool> is_double;
    for (const auto& t : s.tasks()) {
      by_pair[t.pair_index].insert(t.assignees.begin(), t.assignees.end());
      is_double[t.pair_index] = t.double_annotation;
    }
    CAPTURE(seed);
    std::size_t n_double = 0;
    for (const auto& [pair, who] : by_pair) {
      CHECK(who.size() == (is_double[pair] ? 2u : 1u));
      n_double += is_double[pair];
    }
    CHECK(n_double == doubled);
  }
}

TEST_CASE("session creation is validated") {
  CHECK(error_code([] { Session::create("s", make_spec(3, 1, {}, 0, 1)); }) == "invalid_request");
  CHECK(error_code([] { Session::create("s", make_spec(3, 1, {"a", "b"}, 4, 1)); }) == "invalid_request");
  CHECK(error_code([] { Session::create("s", make_spec(3, 1, {"a"}, 1, 1)); }) == "invalid_request");
  auto spec = make_spec(3, 2, {"a"}, 0, 1);
  spec.systems[1].candidates.pop_back();
  CHECK(error_code([&] { Session::create("s", spec); }) == "invalid_request");
}

TEST_CASE("next task serves sources back to back and hides the system") {
  auto s = Session::create("s", make_spec(5, 3, {"a"}, 0, 4));
  std::vector<std::string> pair_order;
  while (auto t = s.next_task("a")) {
    pair_order.push_back(t->pair_id);
    const auto dump = to_json(*t).dump();
    CHECK(dump.find("sys") == std::string::npos);
    CHECK(dump.find("reference") == std::string::npos);
    CHECK(to_json(*t).size() == 4);
    s.submit(good(t->task_id, "a"));
  }
  REQUIRE(pair_order.size() == 15);
  for (std::size_t i = 0; i < 15; i += 3) {
    CHECK(pair_order[i] == pair_order[i + 1]);
    CHECK(pair_order[i] == pair_order[i + 2]);
  }
  CHECK_FALSE(s.next_task("a").has_value());
  CHECK(s.remaining("a") == 0);
  CHECK(error_code([&] { s.next_task("zed"); }) == "unknown_annotator");
}

TEST_CASE("candidate order per source depends on the seed") {
  std::set<std::vector<std::string>> orders;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto s = Session::create("s", make_spec(1, 4, {"a"}, 0, seed));
    std::vector<std::string> order;
    auto copy = s;
    while (auto t = copy.next_task("a")) {
      order.push_back(t->candidate);
      copy.submit(good(t->task_id, "a"));
    }
    orders.insert(order);
  }
  CHECK(orders.size() > 1);
}

TEST_CASE("submission validation") {
  auto s = Session::create("s", make_spec(2, 1, {"a", "b"}, 0, 5));
  const auto t = s.next_task("a");
  REQUIRE(t);
  Annotation a = good(t->task_id, "a");
  a.failing_rule = Rule::Fluency;
  CHECK(error_code([&] { s.submit(a); }) == "unexpected_rule");
  Annotation b{t->task_id, "a", Verdict::Bad, std::nullopt, ""};
  CHECK(error_code([&] { s.submit(b); }) == "missing_rule");
  CHECK(error_code([&] { s.submit(good("t999999", "a")); }) == "unknown_task");
  CHECK(error_code([&] { s.submit(good(t->task_id, "b")); }) == "not_assigned");
  CHECK(error_code([&] { s.submit(good(t->task_id, "nobody")); }) == "unknown_annotator");
  s.submit(bad(t->task_id, "a", Rule::Fluency));
  const auto* stored = s.answer(t->task_id, "a");
  REQUIRE(stored);
  CHECK(stored->failing_rule == Rule::Fluency);
  CHECK_FALSE(stored->timestamp.empty());
  CHECK(error_code([&] { s.submit(good(t->task_id, "a")); }) == "duplicate");
  CHECK(s.answers() == 1);
}

TEST_CASE("accuracy counts and display") {
  auto s = Session::create("s", make_spec(725, 1, {"a"}, 0, 6));
  std::size_t n = 0;
  drain(s, "a", [&](const std::string& task, const std::string& who) {
    return n++ < 389 ? good(task, who) : bad(task, who, Rule::Faithfulness);
  });
  const auto r = s.accuracy("sys0");
  CHECK(r.n_good == 389);
  CHECK(r.n_answered == 725);
  CHECK_FALSE(r.partial());
  CHECK(r.display() == "53.6%");
  CHECK(error_code([&] { s.accuracy("nope"); }) == "unknown_system");
}

TEST_CASE("accuracy edge cases") {
  auto s = Session::create("s", make_spec(4, 2, {"a"}, 0, 7));
  auto r = s.accuracy("sys1");
  CHECK(r.n_answered == 0);
  CHECK(r.n_total == 4);
  CHECK_FALSE(r.accuracy().has_value());
  CHECK(r.display() == "\xE2\x80\x94");
  drain(s, "a", [](const std::string& task, const std::string& who) { return good(task, who); });
  r = s.accuracy("sys1");
  CHECK(r.accuracy() == 1.0);
  CHECK(r.display() == "100.0%");
  CHECK(s.accuracy_all().size() == 2);
  AccuracyReport partial{"x", 1, 3, 4};
  CHECK(partial.partial());
  CHECK(partial.display() == "33.3%");
}

TEST_CASE("double annotated items count the primary verdict once") {
  auto s = Session::create("s", make_spec(2, 1, {"a", "b"}, 2, 8));
  drain(s, "a", [](const std::string& task, const std::string& who) { return good(task, who); });
  drain(s, "b", [](const std::string& task, const std::string& who) { return bad(task, who, Rule::Relatedness); });
  const auto r = s.accuracy("sys0");
  CHECK(r.n_answered == 2);
  CHECK(r.n_good == 2);
  const auto ag = s.agreement();
  CHECK(ag.n_items == 2);
  CHECK(ag.percent_agreement == 0);
}

TEST_CASE("agreement statistics") {
  using V = Verdict;
  const std::vector<V> a = {V::Good, V::Good, V::Bad, V::Bad};
  const std::vector<V> b = {V::Good, V::Bad, V::Good, V::Bad};
  auto r = agreement_of(a, b);
  CHECK(r.percent_agreement == doctest::Approx(0.5));
  REQUIRE(r.kappa);
  CHECK(*r.kappa == doctest::Approx(0.0));
  r = agreement_of(a, a);
  CHECK(r.percent_agreement == 1);
  CHECK(*r.kappa == doctest::Approx(1.0));
  const std::vector<V> all_good(5, V::Good);
  r = agreement_of(all_good, all_good);
  CHECK(r.percent_agreement == 1);
  CHECK_FALSE(r.kappa.has_value());
  CHECK(error_code([] { agreement_of({}, {}); }) == "no_double_items");
  CHECK_THROWS(agreement_of(a, all_good));
  auto s = Session::create("s", make_spec(3, 1, {"a", "b"}, 0, 9));
  CHECK(error_code([&] { s.agreement(); }) == "no_double_items");
}

TEST_CASE("accuracy does not depend on submission order") {
  const auto spec = make_spec(12, 3, {"a", "b", "c"}, 4, 10);
  auto reference = Session::create("s", spec);
  std::vector<Annotation> all;
  for (const auto& t : reference.tasks())
    for (const auto& who : t.assignees)
      all.push_back((t.pair_index + who.size() + t.system_id.back()) % 3 == 0 ? bad(t.task_id, who, Rule::Fluency)
                                                                               : good(t.task_id, who));
  for (const auto& a : all) reference.submit(a);
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(all);
    auto s = Session::create("s", spec);
    for (const auto& a : all) s.submit(a);
    for (const auto& sys : spec.systems) {
      CHECK(s.accuracy(sys.id).n_good == reference.accuracy(sys.id).n_good);
      CHECK(s.accuracy(sys.id).n_answered == reference.accuracy(sys.id).n_answered);
    }
    CHECK(s.agreement().percent_agreement == reference.agreement().percent_agreement);
  }
}

TEST_CASE("json round trips") {
  const auto spec = make_spec(2, 2, {"a", "b"}, 1, 12);
  const auto back = spec_from_json(to_json(spec));
  CHECK(back.pairs.size() == 2);
  CHECK(back.pairs[1].reference == spec.pairs[1].reference);
  CHECK(back.systems[1].candidates == spec.systems[1].candidates);
  CHECK(back.annotators == spec.annotators);
  CHECK(back.double_subset_size == 1);
  CHECK(back.seed == 12);
  const auto a = annotation_from_json(
      nlohmann::json{{"task_id", "t1"}, {"annotator", "a"}, {"verdict", "bad"}, {"failing_rule", "faithfulness"}});
  CHECK(a.verdict == Verdict::Bad);
  CHECK(a.failing_rule == Rule::Faithfulness);
  CHECK_THROWS(annotation_from_json(nlohmann::json{{"task_id", "t1"}, {"annotator", "a"}, {"verdict", "meh"}}));
  CHECK(utc_timestamp().back() == 'Z');
}

TEST_CASE("event log replay rebuilds sessions") {
  const auto log = temp_log("replay.jsonl");
  std::string id;
  std::size_t good_count = 0;
  {
    SessionStore store(log);
    id = store.create(make_spec(4, 2, {"a", "b"}, 2, 13));
    for (const char* who : {"a", "b"}) {
      while (auto t = store.read(id, [&](const Session& s) { return s.next_task(who); })) {
        store.submit(id, good(t->task_id, who));
        ++good_count;
      }
    }
  }
  {
    SessionStore store(log);
    CHECK(store.session_ids() == std::vector<std::string>{id});
    CHECK(store.read(id, [](const Session& s) { return s.answers(); }) == good_count);
    CHECK(store.read(id, [](const Session& s) { return s.agreement().n_items; }) == 4);
    CHECK(error_code([&] { store.read("s9999", [](const Session& s) { return s.answers(); }); }) == "unknown_session");
    const auto next = store.create(make_spec(1, 1, {"a"}, 0, 1));
    CHECK(next != id);
  }
  // A torn trailing line from a crash is ignored.
  {
    std::ofstream out(log, std::ios::app);
    out << "{\"type\":\"annot";
  }
  SessionStore store(log);
  CHECK(store.session_ids().size() == 2);
  CHECK(store.read(id, [](const Session& s) { return s.answers(); }) == good_count);
}

TEST_CASE("rule and verdict names") {
  CHECK(rule_name(Rule::Relatedness) == "relatedness");
  CHECK(parse_rule("faithfulness") == Rule::Faithfulness);
  CHECK(parse_verdict("good") == Verdict::Good);
  CHECK(verdict_name(Verdict::Bad) == "bad");
  CHECK_THROWS(parse_rule("grammar"));
}
