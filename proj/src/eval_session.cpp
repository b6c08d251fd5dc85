#include "summ/eval_session.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>

#include <unistd.h>

#include "summ/random.hpp"

namespace summ::eval {

using nlohmann::json;

std::string_view verdict_name(Verdict v) { return v == Verdict::Good ? "good" : "bad"; }

Verdict parse_verdict(std::string_view s) {
  if (s == "good") return Verdict::Good;
  if (s == "bad") return Verdict::Bad;
  throw EvalError("invalid_verdict", "verdict must be 'good' or 'bad', got '" + std::string(s) + "'");
}

std::string_view rule_name(Rule r) {
  switch (r) {
    case Rule::Fluency: return "fluency";
    case Rule::Relatedness: return "relatedness";
    case Rule::Faithfulness: return "faithfulness";
  }
  return "?";
}

Rule parse_rule(std::string_view s) {
  if (s == "fluency") return Rule::Fluency;
  if (s == "relatedness") return Rule::Relatedness;
  if (s == "faithfulness") return Rule::Faithfulness;
  throw EvalError("invalid_rule", "failing_rule must be fluency|relatedness|faithfulness, got '" + std::string(s) + "'");
}

std::optional<double> AccuracyReport::accuracy() const {
  if (n_answered == 0) return std::nullopt;
  return static_cast<double>(n_good) / static_cast<double>(n_answered);
}

std::string AccuracyReport::display() const {
  if (n_answered == 0) return kNoAnswers;
  // Truncate in integer arithmetic: 389/725 -> 536 per mille -> "53.6%".
  const auto per_mille = n_good * 1000 / n_answered;
  return std::to_string(per_mille / 10) + "." + std::to_string(per_mille % 10) + "%";
}

AgreementReport agreement_of(const std::vector<Verdict>& a, const std::vector<Verdict>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("agreement_of: verdict lists differ in length");
  AgreementReport r;
  r.n_items = a.size();
  if (a.empty()) throw EvalError("no_double_items", "no items carry two verdicts", 409);
  std::size_t same = 0, good_a = 0, good_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same += a[i] == b[i] ? 1 : 0;
    good_a += a[i] == Verdict::Good ? 1 : 0;
    good_b += b[i] == Verdict::Good ? 1 : 0;
  }
  const double n = static_cast<double>(a.size());
  const double po = static_cast<double>(same) / n;
  const double pa = static_cast<double>(good_a) / n, pb = static_cast<double>(good_b) / n;
  const double pe = pa * pb + (1 - pa) * (1 - pb);
  r.percent_agreement = po;
  if (std::abs(1 - pe) > 1e-12) r.kappa = (po - pe) / (1 - pe);
  return r;
}

const std::string& Session::primary(const EvalTask& t) {
  return *std::min_element(t.assignees.begin(), t.assignees.end());
}

Session Session::create(std::string id, SessionSpec spec) {
  if (spec.annotators.empty()) throw EvalError("invalid_request", "at least one annotator is required");
  if (spec.pairs.empty()) throw EvalError("invalid_request", "session has no pairs");
  if (spec.systems.empty()) throw EvalError("invalid_request", "session has no systems");
  {
    std::set<std::string> seen(spec.annotators.begin(), spec.annotators.end());
    if (seen.size() != spec.annotators.size()) throw EvalError("invalid_request", "duplicate annotator id");
    if (seen.count("")) throw EvalError("invalid_request", "empty annotator id");
  }
  for (const auto& s : spec.systems)
    if (s.candidates.size() != spec.pairs.size())
      throw EvalError("invalid_request", "system '" + s.id + "' has " + std::to_string(s.candidates.size()) +
                                             " outputs for " + std::to_string(spec.pairs.size()) + " pairs");
  if (spec.double_subset_size > spec.pairs.size())
    throw EvalError("invalid_request", "double_subset_size " + std::to_string(spec.double_subset_size) +
                                           " exceeds pair count " + std::to_string(spec.pairs.size()));
  if (spec.double_subset_size > 0 && spec.annotators.size() < 2)
    throw EvalError("invalid_request", "double annotation needs at least two annotators");

  Session s;
  s.id_ = std::move(id);
  s.spec_ = std::move(spec);
  const auto& sp = s.spec_;
  const std::size_t np = sp.pairs.size(), ns = sp.systems.size(), na = sp.annotators.size();

  Rng pick_rng(sp.seed, 1);
  std::vector<std::size_t> pick(np);
  for (std::size_t i = 0; i < np; ++i) pick[i] = i;
  pick_rng.shuffle(pick);
  std::vector<bool> doubled(np, false);
  for (std::size_t i = 0; i < sp.double_subset_size; ++i) doubled[pick[i]] = true;

  // Pairs are dispatched in a seeded order to the least-loaded annotators
  // (ties to the earlier-listed annotator).
  Rng order_rng(sp.seed, 2);
  std::vector<std::size_t> pair_order(np);
  for (std::size_t i = 0; i < np; ++i) pair_order[i] = i;
  order_rng.shuffle(pair_order);
  std::vector<std::size_t> load(na, 0);
  std::vector<std::vector<std::string>> assignees(np);
  for (auto p : pair_order) {
    std::vector<std::size_t> by_load(na);
    for (std::size_t a = 0; a < na; ++a) by_load[a] = a;
    std::stable_sort(by_load.begin(), by_load.end(), [&](std::size_t x, std::size_t y) { return load[x] < load[y]; });
    const std::size_t k = doubled[p] ? 2 : 1;
    for (std::size_t j = 0; j < k; ++j) {
      load[by_load[j]] += ns;
      assignees[p].push_back(sp.annotators[by_load[j]]);
    }
  }

  // Task ids are handed out in shuffled order so they carry no hint of the
  // system.
  const std::size_t nt = np * ns;
  std::vector<std::size_t> id_order(nt);
  for (std::size_t i = 0; i < nt; ++i) id_order[i] = i;
  Rng id_rng(sp.seed, 3);
  id_rng.shuffle(id_order);
  s.tasks_.resize(nt);
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t sys = 0; sys < ns; ++sys) {
      const std::size_t slot = p * ns + sys;
      EvalTask& t = s.tasks_[slot];
      char buf[32];
      std::snprintf(buf, sizeof buf, "t%06zu", id_order[slot]);
      t.task_id = buf;
      t.pair_id = sp.pairs[p].id;
      t.pair_index = p;
      t.source = sp.pairs[p].source;
      t.candidate = sp.systems[sys].candidates[p];
      t.system_id = sp.systems[sys].id;
      t.assignees = assignees[p];
      t.double_annotation = doubled[p];
      s.task_by_id_.emplace(t.task_id, slot);
    }

  Rng serve_rng(sp.seed, 4);
  for (const auto& a : sp.annotators) s.queues_[a];
  for (auto p : pair_order) {
    std::vector<std::size_t> systems(ns);
    for (std::size_t i = 0; i < ns; ++i) systems[i] = i;
    serve_rng.shuffle(systems);
    for (const auto& a : assignees[p])
      for (auto sys : systems) s.queues_[a].push_back(p * ns + sys);
  }
  return s;
}

void Session::require_annotator(const std::string& annotator) const {
  if (!queues_.count(annotator))
    throw EvalError("unknown_annotator", "annotator '" + annotator + "' is not part of session " + id_, 404);
}

std::size_t Session::task_index(const std::string& task_id) const {
  auto it = task_by_id_.find(task_id);
  if (it == task_by_id_.end()) throw EvalError("unknown_task", "no task '" + task_id + "' in session " + id_, 404);
  return it->second;
}

std::optional<TaskPayload> Session::next_task(const std::string& annotator) const {
  require_annotator(annotator);
  for (auto idx : queues_.at(annotator)) {
    if (answers_.count({idx, annotator})) continue;
    const auto& t = tasks_[idx];
    return TaskPayload{t.task_id, t.pair_id, t.source, t.candidate};
  }
  return std::nullopt;
}

std::size_t Session::remaining(const std::string& annotator) const {
  require_annotator(annotator);
  std::size_t n = 0;
  for (auto idx : queues_.at(annotator)) n += answers_.count({idx, annotator}) ? 0 : 1;
  return n;
}

void Session::submit(Annotation a) {
  require_annotator(a.annotator);
  const auto idx = task_index(a.task_id);
  const auto& t = tasks_[idx];
  if (std::find(t.assignees.begin(), t.assignees.end(), a.annotator) == t.assignees.end())
    throw EvalError("not_assigned", "task '" + a.task_id + "' is not assigned to '" + a.annotator + "'", 403);
  if (a.verdict == Verdict::Bad && !a.failing_rule)
    throw EvalError("missing_rule", "a bad verdict must name the first failing rule");
  if (a.verdict == Verdict::Good && a.failing_rule)
    throw EvalError("unexpected_rule", "a good verdict cannot carry a failing rule");
  if (answers_.count({idx, a.annotator}))
    throw EvalError("duplicate", "task '" + a.task_id + "' already answered by '" + a.annotator + "'", 409);
  if (a.timestamp.empty()) a.timestamp = utc_timestamp();
  answers_.emplace(std::make_pair(idx, a.annotator), std::move(a));
}

const Annotation* Session::answer(const std::string& task_id, const std::string& annotator) const {
  auto it = answers_.find({task_index(task_id), annotator});
  return it == answers_.end() ? nullptr : &it->second;
}

AccuracyReport Session::accuracy(const std::string& system) const {
  if (std::none_of(spec_.systems.begin(), spec_.systems.end(), [&](const auto& s) { return s.id == system; }))
    throw EvalError("unknown_system", "no system '" + system + "' in session " + id_, 404);
  AccuracyReport r;
  r.system = system;
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    const auto& t = tasks_[i];
    if (t.system_id != system) continue;
    ++r.n_total;
    auto it = answers_.find({i, primary(t)});
    if (it == answers_.end()) continue;
    ++r.n_answered;
    r.n_good += it->second.verdict == Verdict::Good ? 1 : 0;
  }
  return r;
}

std::vector<AccuracyReport> Session::accuracy_all() const {
  std::vector<AccuracyReport> out;
  for (const auto& s : spec_.systems) out.push_back(accuracy(s.id));
  return out;
}

AgreementReport Session::agreement() const {
  std::vector<Verdict> a, b;
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    const auto& t = tasks_[i];
    if (!t.double_annotation || t.assignees.size() != 2) continue;
    const auto& first = primary(t);
    const auto& second = t.assignees[0] == first ? t.assignees[1] : t.assignees[0];
    auto x = answers_.find({i, first});
    auto y = answers_.find({i, second});
    if (x == answers_.end() || y == answers_.end()) continue;
    a.push_back(x->second.verdict);
    b.push_back(y->second.verdict);
  }
  return agreement_of(a, b);
}

json to_json(const TaskPayload& p) {
  return json{{"task_id", p.task_id}, {"pair_id", p.pair_id}, {"source", p.source}, {"candidate", p.candidate}};
}

json to_json(const Annotation& a) {
  json j{{"task_id", a.task_id},
         {"annotator", a.annotator},
         {"verdict", verdict_name(a.verdict)},
         {"timestamp", a.timestamp}};
  j["failing_rule"] = a.failing_rule ? json(rule_name(*a.failing_rule)) : json(nullptr);
  return j;
}

json to_json(const AccuracyReport& r) {
  json j{{"system", r.system},   {"n_good", r.n_good},       {"n_answered", r.n_answered},
         {"n_total", r.n_total}, {"partial", r.partial()}, {"display", r.display()}};
  j["accuracy"] = r.accuracy() ? json(*r.accuracy()) : json(nullptr);
  return j;
}

json to_json(const AgreementReport& r) {
  json j{{"n_items", r.n_items}, {"percent_agreement", r.percent_agreement}};
  j["kappa"] = r.kappa ? json(*r.kappa) : json(nullptr);
  return j;
}

json to_json(const SessionSpec& s) {
  json pairs = json::array(), systems = json::array();
  for (const auto& p : s.pairs) pairs.push_back({{"id", p.id}, {"source", p.source}, {"reference", p.reference}});
  for (const auto& sys : s.systems) systems.push_back({{"id", sys.id}, {"outputs", sys.candidates}});
  return json{{"pairs", pairs},
              {"systems", systems},
              {"annotators", s.annotators},
              {"double_subset_size", s.double_subset_size},
              {"seed", s.seed}};
}

namespace {

const json& field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw EvalError("invalid_request", std::string("missing field '") + name + "'");
  return *it;
}

std::string string_field(const json& j, const char* name) {
  const auto& f = field(j, name);
  if (!f.is_string()) throw EvalError("invalid_request", std::string("field '") + name + "' must be a string");
  return f.get<std::string>();
}

}  // namespace

SessionSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw EvalError("invalid_request", "session body must be an object");
  SessionSpec s;
  try {
    for (const auto& p : field(j, "pairs")) {
      EvalPair ep{string_field(p, "id"), string_field(p, "source"), ""};
      if (auto it = p.find("reference"); it != p.end() && it->is_string()) ep.reference = it->get<std::string>();
      s.pairs.push_back(std::move(ep));
    }
    for (const auto& sys : field(j, "systems"))
      s.systems.push_back({string_field(sys, "id"), field(sys, "outputs").get<std::vector<std::string>>()});
    s.annotators = field(j, "annotators").get<std::vector<std::string>>();
    if (auto it = j.find("double_subset_size"); it != j.end()) s.double_subset_size = it->get<std::size_t>();
    if (auto it = j.find("seed"); it != j.end()) s.seed = it->get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw EvalError("invalid_request", std::string("malformed session: ") + e.what());
  }
  return s;
}

Annotation annotation_from_json(const json& j) {
  if (!j.is_object()) throw EvalError("invalid_request", "annotation body must be an object");
  Annotation a;
  a.task_id = string_field(j, "task_id");
  a.annotator = string_field(j, "annotator");
  a.verdict = parse_verdict(string_field(j, "verdict"));
  if (auto it = j.find("failing_rule"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw EvalError("invalid_rule", "failing_rule must be a string");
    a.failing_rule = parse_rule(it->get<std::string>());
  }
  if (auto it = j.find("timestamp"); it != j.end() && it->is_string()) a.timestamp = it->get<std::string>();
  return a;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

SessionStore::SessionStore() = default;

SessionStore::SessionStore(std::filesystem::path event_log) : log_path_(std::move(event_log)) {
  if (std::filesystem::exists(log_path_)) {
    std::ifstream in(log_path_, std::ios::binary);
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
      ++lineno;
      if (line.empty()) continue;
      json ev;
      try {
        ev = json::parse(line);
      } catch (const json::parse_error&) {
        // A torn final line from a crash mid-write; anything earlier is corrupt.
        if (in.peek() == std::char_traits<char>::eof()) break;
        throw std::runtime_error("event log " + log_path_.string() + " corrupt at line " + std::to_string(lineno));
      }
      apply(ev);
    }
  }
  log_ = std::fopen(log_path_.c_str(), "ab");
  if (!log_) throw std::runtime_error("cannot open event log " + log_path_.string());
}

SessionStore::~SessionStore() {
  if (log_) std::fclose(log_);
}

void SessionStore::append(const json& event) {
  if (!log_) return;
  const auto line = event.dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0)
    throw std::runtime_error("failed to append to event log");
  ::fsync(::fileno(log_));
}

void SessionStore::apply(const json& ev) {
  const auto kind = ev.at("event").get<std::string>();
  const auto id = ev.at("session").get<std::string>();
  if (kind == "create") {
    sessions_.emplace(id, Session::create(id, spec_from_json(ev.at("spec"))));
  } else if (kind == "submit") {
    find(id).submit(annotation_from_json(ev.at("annotation")));
  } else {
    throw std::runtime_error("unknown event '" + kind + "' in log");
  }
}

std::string SessionStore::next_id() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%04zu", sessions_.size() + 1);
  return buf;
}

std::string SessionStore::create(SessionSpec spec) {
  std::unique_lock lock(mutex_);
  const auto id = next_id();
  const json spec_json = to_json(spec);
  Session s = Session::create(id, std::move(spec));
  append({{"event", "create"}, {"session", id}, {"spec", spec_json}});
  sessions_.emplace(id, std::move(s));
  return id;
}

void SessionStore::submit(const std::string& session_id, Annotation a) {
  std::unique_lock lock(mutex_);
  Session& s = find(session_id);
  if (a.timestamp.empty()) a.timestamp = utc_timestamp();
  s.submit(a);
  append({{"event", "submit"}, {"session", session_id}, {"annotation", to_json(a)}});
}

std::vector<std::string> SessionStore::session_ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

const Session& SessionStore::find(const std::string& id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw EvalError("unknown_session", "no session '" + id + "'", 404);
  return it->second;
}

Session& SessionStore::find(const std::string& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw EvalError("unknown_session", "no session '" + id + "'", 404);
  return it->second;
}

}  // namespace summ::eval
