#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "summ/beam.hpp"
#include "summ/checkpoint.hpp"
#include "summ/corpus.hpp"
#include "summ/eval_server.hpp"
#include "summ/eval_session.hpp"
#include "summ/manifest.hpp"
#include "summ/relatedness.hpp"
#include "summ/rouge.hpp"
#include "summ/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

json rouge_json(const summ::RougeValue& v) {
  return json{{"recall", v.recall}, {"precision", v.precision}, {"f1", v.f1}};
}

struct Globals {
  std::uint64_t seed = 0;
  std::string manifest_out;
};

struct TrainArgs {
  std::string train_path, dev_path, out_dir, format = "jsonl", policy = "characters";
  int min_score = 0;
  std::size_t max_vocab = 10000, min_count = 1;
  std::size_t embedding_size = 400, hidden_size = 500, attention_size = 0;
  std::string mode = "baseline", attention = "additive";
  summ::TrainConfig cfg;
};

struct GenerateArgs {
  std::string checkpoint, vocab, input, output;
  std::size_t beam_size = 5, max_len = 30;
  bool length_normalize = false;
};

struct ScoreArgs {
  std::string candidates, references, output;
};

struct AnalyzeArgs {
  std::string checkpoint, vocab, corpus, output, format = "jsonl";
  std::size_t top_k = 4, threads = 1;
};

struct SynthArgs {
  summ::SynthSpec spec;
  std::string split = "train", out, clean_out;
};

struct ServeArgs {
  summ::eval::ServerOptions opts;
  std::string event_log, static_dir;
};

struct AgreementArgs {
  std::string event_log, session;
};

summ::CorpusFormat format_of(const std::string& s) { return summ::parse_format(s); }

fs::path manifest_path(const Globals& g, const fs::path& fallback) {
  return g.manifest_out.empty() ? fallback : fs::path(g.manifest_out);
}

std::string toml_value(const std::string& v) {
  if (v == "true" || v == "false") return v;
  if (!v.empty()) {
    char* end = nullptr;
    std::strtod(v.c_str(), &end);
    if (*end == '\0' && v.find_first_of("0123456789") != std::string::npos) return v;
  }
  std::string out = "\"";
  for (char c : v) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

// Every option of `app` with its effective value, defaults included.
void write_options(std::ostream& out, const CLI::App& app) {
  for (const auto* opt : app.get_options()) {
    const auto name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || name == "manifest-out") continue;
    std::string value = opt->get_default_str();
    if (opt->count() > 0) {
      value.clear();
      for (const auto& r : opt->results()) value += (value.empty() ? "" : " ") + r;
    }
    out << name << '=' << toml_value(value) << '\n';
  }
}

void emit_manifest(const CLI::App& app, const Globals& g, const fs::path& fallback, std::vector<fs::path> inputs,
                   std::vector<fs::path> artifacts) {
  const auto* sub = app.get_subcommands().front();
  std::ostringstream cfg;
  write_options(cfg, app);
  cfg << "\n[" << sub->get_name() << "]\n";
  write_options(cfg, *sub);
  summ::RunManifest m;
  m.config = cfg.str();
  m.inputs = std::move(inputs);
  m.artifacts = std::move(artifacts);
  summ::write_manifest(manifest_path(g, fallback), m);
}

int run_train(const CLI::App& app, const Globals& g, TrainArgs& a) {
  const auto policy = summ::parse_policy(a.policy);
  const auto fmt = format_of(a.format);
  auto train_pairs = summ::load_pairs(a.train_path, fmt, summ::Split::Train);
  train_pairs = summ::filter_by_score(train_pairs, a.min_score);
  if (train_pairs.empty()) throw std::runtime_error("no training pairs left after filtering");
  const auto vocab = summ::build_vocab(train_pairs, policy, a.max_vocab, a.min_count);

  summ::TrainData data;
  data.vocab = &vocab;
  data.train = summ::encode_pairs(train_pairs, vocab);
  std::vector<fs::path> inputs{a.train_path};
  if (!a.dev_path.empty()) {
    const auto dev_pairs = summ::load_pairs(a.dev_path, fmt, summ::Split::Dev);
    data.dev = summ::encode_pairs(dev_pairs, vocab);
    for (const auto& p : dev_pairs) data.dev_references.push_back(p.summary);
    inputs.push_back(a.dev_path);
  }

  summ::ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.embedding_size = a.embedding_size;
  mc.hidden_size = a.hidden_size;
  mc.attention_size = a.attention_size;
  mc.mode = summ::parse_mode(a.mode);
  mc.attention = summ::parse_attention(a.attention);
  mc.seed = g.seed;
  a.cfg.mode = mc.mode;
  a.cfg.seed = g.seed;

  const fs::path out(a.out_dir);
  fs::create_directories(out);
  std::vector<fs::path> artifacts{out / "vocab.txt"};
  vocab.save(artifacts.front());
  auto log = open_out(out / "train_log.jsonl");

  auto result = summ::train(summ::init_params(mc), data, a.cfg,
                            [&](const summ::EpochRecord& rec, const summ::Checkpoint& ckpt) {
                              char name[32];
                              std::snprintf(name, sizeof name, "epoch-%02zu.ckpt", rec.epoch);
                              summ::save_checkpoint(out / name, ckpt);
                              artifacts.push_back(out / name);
                              log << rec.to_json() << '\n' << std::flush;
                              std::cerr << rec.to_json() << '\n';
                            });
  if (!data.dev.empty()) {
    const auto best = summ::select_best_checkpoint(result.checkpoints, data.dev, data.dev_references, vocab,
                                                   a.cfg.dev_beam_size, a.cfg.dev_max_len);
    summ::save_checkpoint(out / "best.ckpt", result.checkpoints[best]);
    artifacts.push_back(out / "best.ckpt");
    std::cerr << "best epoch: " << result.checkpoints[best].progress.epoch << '\n';
  }
  // The training log records wall time, so it is left out of the hashes.
  emit_manifest(app, g, out / "manifest.toml", inputs, artifacts);
  return 0;
}

int run_generate(const CLI::App& app, const Globals& g, const GenerateArgs& a) {
  const auto vocab = summ::Vocab::load(a.vocab);
  const auto ckpt = summ::load_checkpoint(a.checkpoint);
  if (ckpt.params.config.vocab_size != vocab.size())
    throw std::runtime_error("checkpoint vocab size " + std::to_string(ckpt.params.config.vocab_size) +
                             " does not match vocab file size " + std::to_string(vocab.size()));
  std::ostringstream text;
  for (const auto& line : read_lines(a.input)) {
    const auto src = vocab.encode(line);
    if (src.empty()) {
      text << '\n';
      continue;
    }
    const auto d = summ::beam_search(ckpt.params, src, {a.beam_size, a.max_len, a.length_normalize});
    text << vocab.decode(d.tokens) << '\n';
  }
  std::vector<fs::path> artifacts;
  if (a.output.empty()) {
    std::cout << text.str();
  } else {
    open_out(a.output) << text.str();
    artifacts.push_back(a.output);
  }
  const fs::path fallback = a.output.empty() ? fs::path("generate.manifest.toml") : fs::path(a.output + ".manifest.toml");
  emit_manifest(app, g, fallback, {a.checkpoint, a.vocab, a.input}, artifacts);
  return 0;
}

int run_score(const CLI::App& app, const Globals& g, const ScoreArgs& a) {
  const auto cands = read_lines(a.candidates);
  const auto refs = read_lines(a.references);
  if (cands.size() != refs.size())
    throw summ::eval::EvalError("length_mismatch", "candidates have " + std::to_string(cands.size()) +
                                                       " lines but references have " + std::to_string(refs.size()));
  std::vector<summ::PairRouge> per;
  ordered_json pairs = ordered_json::array();
  for (std::size_t i = 0; i < cands.size(); ++i) {
    per.push_back(summ::score_pair(cands[i], refs[i]));
    const auto& p = per.back();
    ordered_json j;
    j["index"] = i;
    j["rouge1"] = p.rouge1 ? rouge_json(*p.rouge1) : json(nullptr);
    j["rouge2"] = p.rouge2 ? rouge_json(*p.rouge2) : json(nullptr);
    j["rougeL"] = rouge_json(p.rougeL.value);
    pairs.push_back(j);
  }
  const auto corpus = summ::aggregate_rouge(per);
  ordered_json report;
  report["pairs"] = corpus.pairs;
  report["corpus"] = {{"rouge1", rouge_json(corpus.rouge1)},
                      {"rouge2", rouge_json(corpus.rouge2)},
                      {"rougeL", rouge_json(corpus.rougeL)}};
  report["skipped_rouge1"] = corpus.skipped_rouge1;
  report["skipped_rouge2"] = corpus.skipped_rouge2;
  report["per_pair"] = pairs;
  std::vector<fs::path> artifacts;
  if (a.output.empty()) {
    std::cout << report.dump(2) << '\n';
  } else {
    open_out(a.output) << report.dump(2) << '\n';
    artifacts.push_back(a.output);
  }
  const fs::path fallback = a.output.empty() ? fs::path("score.manifest.toml") : fs::path(a.output + ".manifest.toml");
  emit_manifest(app, g, fallback, {a.candidates, a.references}, artifacts);
  return 0;
}

int run_analyze(const CLI::App& app, const Globals& g, const AnalyzeArgs& a) {
  const auto vocab = summ::Vocab::load(a.vocab);
  const auto ckpt = summ::load_checkpoint(a.checkpoint);
  const auto pairs = summ::load_pairs(a.corpus, format_of(a.format));
  const auto encoded = summ::encode_pairs(pairs, vocab);
  const auto matrix = summ::accumulate_relatedness(ckpt.params, encoded, a.threads);
  std::ostringstream table;
  table << "label\tcount\trelated\n";
  for (summ::TokenId l = summ::kNumSpecial; l < vocab.size(); ++l) {
    if (!matrix.present(l)) continue;
    table << vocab.token(l) << '\t' << matrix.count(l) << '\t';
    const auto rel = summ::top_k_related(matrix, l, a.top_k);
    for (std::size_t i = 0; i < rel.size(); ++i) {
      char val[32];
      std::snprintf(val, sizeof val, "%.6f", rel[i].value);
      table << (i ? " " : "") << vocab.token(rel[i].label) << ':' << val;
    }
    table << '\n';
  }
  std::vector<fs::path> artifacts;
  if (a.output.empty()) {
    std::cout << table.str();
  } else {
    open_out(a.output) << table.str();
    artifacts.push_back(a.output);
  }
  const fs::path fallback = a.output.empty() ? fs::path("analyze.manifest.toml") : fs::path(a.output + ".manifest.toml");
  emit_manifest(app, g, fallback, {a.checkpoint, a.vocab, a.corpus}, artifacts);
  return 0;
}

int run_synth(const CLI::App& app, const Globals& g, SynthArgs& a) {
  a.spec.seed = g.seed;
  a.spec.split = summ::parse_split(a.split);
  const auto corpus = summ::synth_corpus(a.spec);
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  summ::write_pairs(out, corpus.pairs);
  const fs::path clean = a.clean_out.empty() ? fs::path(a.out + ".clean") : fs::path(a.clean_out);
  summ::write_clean_sidecar(clean, corpus);
  emit_manifest(app, g, fs::path(a.out + ".manifest.toml"), {}, {out, clean});
  return 0;
}

int run_serve(const ServeArgs& a) {
  auto opts = a.opts;
  if (!a.event_log.empty()) opts.event_log = a.event_log;
  if (!a.static_dir.empty()) opts.static_dir = a.static_dir;
  std::cerr << "listening on " << opts.host << ':' << opts.port << '\n';
  summ::eval::serve(opts);
  return 0;
}

int run_agreement(const AgreementArgs& a) {
  if (!fs::exists(a.event_log)) throw std::runtime_error("event log " + a.event_log + " does not exist");
  // Replay into a scratch copy so the original log is never appended to.
  const auto scratch = fs::temp_directory_path() / ("summ-agreement-" + std::to_string(::getpid()) + ".jsonl");
  fs::copy_file(a.event_log, scratch, fs::copy_options::overwrite_existing);
  ordered_json out = ordered_json::object();
  try {
    summ::eval::SessionStore store(scratch);
    const auto ids = a.session.empty() ? store.session_ids() : std::vector<std::string>{a.session};
    for (const auto& id : ids) {
      try {
        out[id] = store.read(id, [](const summ::eval::Session& s) { return to_json(s.agreement()); });
      } catch (const summ::eval::EvalError& e) {
        if (!a.session.empty()) throw;
        out[id] = {{"error", {{"code", e.code()}, {"message", e.what()}}}};
      }
    }
  } catch (...) {
    fs::remove(scratch);
    throw;
  }
  fs::remove(scratch);
  std::cout << out.dump(2) << '\n';
  return 0;
}

void print_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequence-to-sequence summarization toolkit", "summ"};
  app.set_config("--config", "", "Read options from a TOML file (a run manifest works)");
  app.allow_config_extras(CLI::config_extras_mode::ignore);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Run seed")->capture_default_str();
  app.add_option("--manifest-out", g.manifest_out, "Where to write the run manifest");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model and write per-epoch checkpoints");
  train->add_option("--train", ta.train_path, "Training corpus")->required();
  train->add_option("--dev", ta.dev_path, "Dev corpus for ROUGE and checkpoint selection");
  train->add_option("--out", ta.out_dir, "Output directory")->required();
  train->add_option("--format", ta.format, "jsonl | tsv")->capture_default_str();
  train->add_option("--policy", ta.policy, "words | characters | whitespace")->capture_default_str();
  train->add_option("--min-score", ta.min_score, "Drop pairs scored below this (0 keeps all)")->capture_default_str();
  train->add_option("--max-vocab", ta.max_vocab, "Vocabulary size including specials")->capture_default_str();
  train->add_option("--min-count", ta.min_count)->capture_default_str();
  train->add_option("--embedding-size", ta.embedding_size)->capture_default_str();
  train->add_option("--hidden-size", ta.hidden_size)->capture_default_str();
  train->add_option("--attention-size", ta.attention_size, "0 uses the hidden size")->capture_default_str();
  train->add_option("--mode", ta.mode, "baseline | self | dual")->capture_default_str();
  train->add_option("--attention", ta.attention, "additive | multiplicative")->capture_default_str();
  train->add_option("--epochs,--epochs-total", ta.cfg.epochs_total)->capture_default_str();
  train->add_option("--pretrain,--pretrain-epochs", ta.cfg.pretrain_epochs)->capture_default_str();
  train->add_option("--batch-size", ta.cfg.batch_size)->capture_default_str();
  train->add_option("--learning-rate", ta.cfg.learning_rate)->capture_default_str();
  train->add_option("--beta-first-moment", ta.cfg.beta_first_moment)->capture_default_str();
  train->add_option("--beta-second-moment", ta.cfg.beta_second_moment)->capture_default_str();
  train->add_option("--epsilon", ta.cfg.epsilon)->capture_default_str();
  train->add_option("--clip-norm", ta.cfg.clip_norm)->capture_default_str();
  train->add_option("--tau", ta.cfg.regularizer.tau)->capture_default_str();
  train->add_option("--alpha", ta.cfg.regularizer.alpha)->capture_default_str();
  train->add_option("--detach-soft-target", ta.cfg.regularizer.detach_soft_target)->capture_default_str();
  train->add_option("--head2-updates-shared", ta.cfg.head2_updates_shared)->capture_default_str();
  train->add_option("--bucket-window", ta.cfg.bucket_window)->capture_default_str();
  train->add_option("--dev-beam-size", ta.cfg.dev_beam_size)->capture_default_str();
  train->add_option("--dev-max-len", ta.cfg.dev_max_len)->capture_default_str();
  train->add_option("--threads", ta.cfg.threads)->capture_default_str();

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Summarize one source per input line");
  gen->add_option("--checkpoint", ga.checkpoint)->required();
  gen->add_option("--vocab", ga.vocab)->required();
  gen->add_option("--input", ga.input)->required();
  gen->add_option("--output", ga.output, "Defaults to stdout");
  gen->add_option("--beam-size", ga.beam_size)->capture_default_str();
  gen->add_option("--max-len", ga.max_len)->capture_default_str();
  gen->add_option("--length-normalize", ga.length_normalize)->capture_default_str();

  ScoreArgs sa;
  auto* score = app.add_subcommand("score", "Character ROUGE of aligned candidate/reference files");
  score->add_option("--candidates", sa.candidates)->required();
  score->add_option("--references", sa.references)->required();
  score->add_option("--output", sa.output, "Defaults to stdout");

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "Top related labels from a trained model");
  analyze->add_option("--checkpoint", aa.checkpoint)->required();
  analyze->add_option("--vocab", aa.vocab)->required();
  analyze->add_option("--corpus", aa.corpus)->required();
  analyze->add_option("--format", aa.format)->capture_default_str();
  analyze->add_option("--output", aa.output, "Defaults to stdout");
  analyze->add_option("--top-k", aa.top_k)->capture_default_str();
  analyze->add_option("--threads", aa.threads)->capture_default_str();

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic select-and-translate corpus");
  synth->add_option("--pairs,--num-pairs", ya.spec.num_pairs)->capture_default_str();
  synth->add_option("--spurious,--spurious-rate", ya.spec.spurious_rate)->capture_default_str();
  synth->add_option("--content-vocab", ya.spec.content_vocab)->capture_default_str();
  synth->add_option("--min-segments", ya.spec.min_segments)->capture_default_str();
  synth->add_option("--max-segments", ya.spec.max_segments)->capture_default_str();
  synth->add_option("--max-repeat", ya.spec.max_repeat)->capture_default_str();
  synth->add_option("--split", ya.split, "train | dev | test")->capture_default_str();
  synth->add_option("--out", ya.out, "Corpus path")->required();
  synth->add_option("--clean-out", ya.clean_out, "Clean/spurious sidecar (default <out>.clean)");

  ServeArgs va;
  auto* serve = app.add_subcommand("serve-eval", "Run the human-evaluation HTTP service");
  serve->add_option("--host", va.opts.host)->capture_default_str();
  serve->add_option("--port", va.opts.port)->capture_default_str();
  serve->add_option("--event-log", va.event_log, "Append-only log, replayed on start");
  serve->add_option("--static-dir", va.static_dir, "Directory served at /");

  AgreementArgs ra;
  auto* agree = app.add_subcommand("agreement", "Inter-annotator agreement from an event log");
  agree->add_option("--event-log", ra.event_log)->required();
  agree->add_option("--session", ra.session, "Defaults to every session");

  // `summ --config manifest.toml` alone replays the subcommand the manifest
  // was written for.
  std::vector<std::string> args(argv + 1, argv + argc);
  bool has_sub = false;
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    for (const auto* sub : app.get_subcommands({})) has_sub = has_sub || args[i] == sub->get_name();
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (!has_sub && !config_path.empty()) {
    std::ifstream cfg(config_path);
    for (std::string line; !has_sub && std::getline(cfg, line);) {
      if (line.size() < 3 || line.front() != '[' || line.back() != ']') continue;
      const auto name = line.substr(1, line.size() - 2);
      for (const auto* sub : app.get_subcommands({}))
        if (sub->get_name() == name) has_sub = true;
      if (has_sub) args.push_back(name);
    }
  }
  std::reverse(args.begin(), args.end());

  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << '\n';
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*train) return run_train(app, g, ta);
    if (*gen) return run_generate(app, g, ga);
    if (*score) return run_score(app, g, sa);
    if (*analyze) return run_analyze(app, g, aa);
    if (*synth) return run_synth(app, g, ya);
    if (*serve) return run_serve(va);
    if (*agree) return run_agreement(ra);
  } catch (const summ::eval::EvalError& e) {
    print_error(e.code(), e.what());
    return 1;
  } catch (const summ::CorpusError& e) {
    print_error("corpus", e.what());
    return 1;
  } catch (const summ::CheckpointError& e) {
    print_error("checkpoint", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    print_error("invalid_argument", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("failed", e.what());
    return 1;
  }
  return 1;
}
