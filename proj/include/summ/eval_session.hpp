#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace summ::eval {

enum class Verdict { Good, Bad };
// Checked in this order; the first rule that fails decides a bad verdict.
enum class Rule { Fluency, Relatedness, Faithfulness };

std::string_view verdict_name(Verdict v);
Verdict parse_verdict(std::string_view s);
std::string_view rule_name(Rule r);
Rule parse_rule(std::string_view s);

// Machine-readable failure; `code` is stable API surface.
class EvalError : public std::runtime_error {
 public:
  EvalError(std::string code, const std::string& message, int http_status = 400)
      : std::runtime_error(message), code_(std::move(code)), status_(http_status) {}
  const std::string& code() const { return code_; }
  int http_status() const { return status_; }

 private:
  std::string code_;
  int status_;
};

struct EvalPair {
  std::string id;
  std::string source;
  std::string reference;  // kept for bookkeeping, never served
};

struct SystemOutputs {
  std::string id;
  std::vector<std::string> candidates;  // aligned with the session pairs
};

struct SessionSpec {
  std::vector<EvalPair> pairs;
  std::vector<SystemOutputs> systems;
  std::vector<std::string> annotators;
  std::size_t double_subset_size = 100;
  std::uint64_t seed = 0;
};

struct EvalTask {
  std::string task_id;
  std::string pair_id;
  std::size_t pair_index = 0;
  std::string source;
  std::string candidate;
  std::string system_id;
  std::vector<std::string> assignees;
  bool double_annotation = false;
};

// The only task view that leaves the service.
struct TaskPayload {
  std::string task_id;
  std::string pair_id;
  std::string source;
  std::string candidate;
};

struct Annotation {
  std::string task_id;
  std::string annotator;
  Verdict verdict = Verdict::Good;
  std::optional<Rule> failing_rule;
  std::string timestamp;  // ISO-8601 UTC; filled in on submit when empty
};

// Displayed accuracy when nothing has been answered (U+2014).
inline constexpr const char* kNoAnswers = "\xE2\x80\x94";

struct AccuracyReport {
  std::string system;
  std::size_t n_good = 0;
  std::size_t n_answered = 0;
  std::size_t n_total = 0;
  bool partial() const { return n_answered < n_total; }
  std::optional<double> accuracy() const;
  // Percentage truncated to one decimal ("53.6%"), or kNoAnswers.
  std::string display() const;
};

struct AgreementReport {
  std::size_t n_items = 0;
  double percent_agreement = 0;
  std::optional<double> kappa;  // undefined when expected agreement is 1
};

// Cohen's kappa and raw agreement for two aligned verdict lists.
AgreementReport agreement_of(const std::vector<Verdict>& a, const std::vector<Verdict>& b);

class Session {
 public:
  // Every (pair, system) becomes a task. A seeded subset of pairs is
  // annotated twice; otherwise all tasks of one pair go to one annotator,
  // chosen as the least loaded.
  static Session create(std::string id, SessionSpec spec);

  const std::string& id() const { return id_; }
  const SessionSpec& spec() const { return spec_; }
  const std::vector<EvalTask>& tasks() const { return tasks_; }
  const std::vector<std::string>& annotators() const { return spec_.annotators; }

  // Next unanswered task of this annotator; all candidates of one source are
  // served back to back in a seeded order.
  std::optional<TaskPayload> next_task(const std::string& annotator) const;
  std::size_t remaining(const std::string& annotator) const;

  void submit(Annotation a);

  AccuracyReport accuracy(const std::string& system) const;
  std::vector<AccuracyReport> accuracy_all() const;
  AgreementReport agreement() const;

  std::size_t answers() const { return answers_.size(); }
  const Annotation* answer(const std::string& task_id, const std::string& annotator) const;

 private:
  std::size_t task_index(const std::string& task_id) const;
  void require_annotator(const std::string& annotator) const;
  // Lexicographically first assignee; their verdict is the one counted.
  static const std::string& primary(const EvalTask& t);

  std::string id_;
  SessionSpec spec_;
  std::vector<EvalTask> tasks_;
  std::map<std::string, std::size_t> task_by_id_;
  std::map<std::string, std::vector<std::size_t>> queues_;
  std::map<std::pair<std::size_t, std::string>, Annotation> answers_;
};

nlohmann::json to_json(const TaskPayload& p);
nlohmann::json to_json(const Annotation& a);
nlohmann::json to_json(const AccuracyReport& r);
nlohmann::json to_json(const AgreementReport& r);
nlohmann::json to_json(const SessionSpec& s);
SessionSpec spec_from_json(const nlohmann::json& j);
Annotation annotation_from_json(const nlohmann::json& j);

std::string utc_timestamp();

// Owns sessions behind a single writer lock. When given a log path, every
// accepted mutation is appended and synced before the lock is released, and
// the log is replayed on construction.
class SessionStore {
 public:
  SessionStore();
  explicit SessionStore(std::filesystem::path event_log);
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  std::string create(SessionSpec spec);
  void submit(const std::string& session_id, Annotation a);

  // Run `fn` against a session under a shared lock.
  template <typename Fn>
  auto read(const std::string& session_id, Fn&& fn) const {
    std::shared_lock lock(mutex_);
    return fn(find(session_id));
  }

  std::vector<std::string> session_ids() const;

 private:
  const Session& find(const std::string& id) const;
  Session& find(const std::string& id);
  void append(const nlohmann::json& event);
  void apply(const nlohmann::json& event);
  std::string next_id() const;

  mutable std::shared_mutex mutex_;
  std::map<std::string, Session> sessions_;
  std::filesystem::path log_path_;
  std::FILE* log_ = nullptr;
};

}  // namespace summ::eval
