#include "summ/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "summ/random.hpp"

namespace summ {

using nlohmann::json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

CorpusFormat parse_format(std::string_view s) {
  if (s == "jsonl" || s == "json") return CorpusFormat::JsonLines;
  if (s == "tsv") return CorpusFormat::Tsv;
  throw std::invalid_argument("unknown corpus format '" + std::string(s) + "' (expected jsonl|tsv)");
}

namespace {

std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

Pair parse_json_record(std::string_view line, std::size_t lineno, Split split) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw CorpusError(std::string("malformed record: ") + e.what(), lineno);
  }
  if (!j.is_object()) throw CorpusError("record is not an object", lineno);
  auto text_field = [&](const char* name) -> std::string {
    auto it = j.find(name);
    if (it == j.end() || !it->is_string()) throw CorpusError(std::string("missing string field '") + name + "'", lineno);
    auto v = it->get<std::string>();
    if (trim(v).empty()) throw CorpusError(std::string("field '") + name + "' is empty", lineno);
    return v;
  };
  Pair p;
  p.source = text_field("text");
  p.summary = text_field("summary");
  p.split = split;
  if (auto it = j.find("score"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw CorpusError("field 'score' must be an integer", lineno);
    p.score = it->get<int>();
  }
  if (auto it = j.find("id"); it != j.end() && !it->is_null()) {
    if (it->is_string()) p.id = it->get<std::string>();
    else if (it->is_number_integer()) p.id = std::to_string(it->get<long long>());
    else throw CorpusError("field 'id' must be a string or integer", lineno);
  }
  if (auto it = j.find("split"); it != j.end() && it->is_string()) {
    try {
      p.split = parse_split(it->get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw CorpusError(e.what(), lineno);
    }
  }
  return p;
}

Pair parse_tsv_record(std::string_view line, std::size_t lineno, Split split) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  if (cols.size() < 2 || trim(cols[1]).empty()) throw CorpusError("record missing summary", lineno);
  if (trim(cols[0]).empty()) throw CorpusError("record missing text", lineno);
  if (cols.size() > 3) throw CorpusError("too many columns", lineno);
  Pair p;
  p.source = std::string(cols[0]);
  p.summary = std::string(cols[1]);
  p.split = split;
  if (cols.size() == 3 && !trim(cols[2]).empty()) {
    try {
      std::size_t used = 0;
      const std::string s(trim(cols[2]));
      p.score = std::stoi(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw CorpusError("score is not an integer", lineno);
    }
  }
  return p;
}

}  // namespace

std::vector<Pair> parse_pairs(std::string_view content, CorpusFormat format, Split split) {
  std::vector<Pair> out;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    std::string_view line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? content.size() : nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    Pair p = format == CorpusFormat::JsonLines ? parse_json_record(line, lineno, split)
                                               : parse_tsv_record(line, lineno, split);
    if (p.id.empty()) p.id = std::string(split_name(p.split)) + "-" + std::to_string(out.size());
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Pair> load_pairs(const std::filesystem::path& path, CorpusFormat format, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pairs(ss.str(), format, split);
}

std::string pair_to_json(const Pair& p) {
  json j;
  j["id"] = p.id;
  j["text"] = p.source;
  j["summary"] = p.summary;
  if (p.score) j["score"] = *p.score;
  return j.dump();
}

void write_pairs(const std::filesystem::path& path, std::span<const Pair> pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& p : pairs) out << pair_to_json(p) << '\n';
}

std::vector<Pair> filter_by_score(std::span<const Pair> pairs, int min_score) {
  std::vector<Pair> out;
  for (const auto& p : pairs) {
    if (p.score ? *p.score >= min_score : min_score == 0) out.push_back(p);
  }
  return out;
}

std::string_view policy_name(TokenPolicy p) {
  switch (p) {
    case TokenPolicy::Words: return "words";
    case TokenPolicy::Characters: return "characters";
    case TokenPolicy::Whitespace: return "whitespace";
  }
  return "?";
}

TokenPolicy parse_policy(std::string_view s) {
  if (s == "words") return TokenPolicy::Words;
  if (s == "characters" || s == "chars") return TokenPolicy::Characters;
  if (s == "whitespace") return TokenPolicy::Whitespace;
  throw std::invalid_argument("unknown token policy '" + std::string(s) + "' (expected words|characters|whitespace)");
}

namespace {

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

bool ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text, TokenPolicy policy) {
  std::vector<std::string> out;
  switch (policy) {
    case TokenPolicy::Characters: {
      std::size_t i = 0;
      while (i < text.size()) {
        const auto len = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
        if (!(len == 1 && ascii_space(text[i]))) out.emplace_back(text.substr(i, len));
        i += len;
      }
      break;
    }
    case TokenPolicy::Words:
    case TokenPolicy::Whitespace: {
      auto is_sep = [policy](char c) { return policy == TokenPolicy::Words ? c == ' ' : ascii_space(c); };
      std::size_t i = 0;
      while (i < text.size()) {
        while (i < text.size() && is_sep(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_sep(text[j])) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
      }
      break;
    }
  }
  return out;
}

std::string detokenize(std::span<const std::string> tokens, TokenPolicy policy) {
  std::string out;
  const bool spaced = policy != TokenPolicy::Characters;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (spaced && i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocab::Vocab(TokenPolicy policy) : Vocab(policy, {}) {}

Vocab::Vocab(TokenPolicy policy, std::vector<std::string> tokens_after_specials) : policy_(policy) {
  id_to_token_ = {"<pad>", "<s>", "</s>", "<unk>"};
  for (auto& t : tokens_after_specials) id_to_token_.push_back(std::move(t));
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    auto [it, inserted] = token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i));
    if (!inserted) throw std::invalid_argument("duplicate vocabulary token '" + id_to_token_[i] + "'");
  }
}

TokenId Vocab::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id >= id_to_token_.size()) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  return id_to_token_[id];
}

bool Vocab::contains(std::string_view token) const { return token_to_id_.count(std::string(token)) != 0; }

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& t : tokenize(text, policy_)) ids.push_back(id(t));
  return ids;
}

std::vector<TokenId> Vocab::encode_target(std::string_view text) const {
  std::vector<TokenId> ids{kBos};
  for (auto i : encode(text)) ids.push_back(i);
  ids.push_back(kEos);
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> toks;
  for (auto i : ids) {
    if (i == kEos) break;
    if (i == kPad || i == kBos) continue;
    toks.push_back(token(i));
  }
  return detokenize(toks, policy_);
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "policy " << policy_name(policy_) << '\n';
  for (std::size_t i = kNumSpecial; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::string header;
  std::getline(in, header);
  if (header.rfind("policy ", 0) != 0) throw std::runtime_error("vocabulary file lacks a policy header");
  const auto policy = parse_policy(header.substr(7));
  std::vector<std::string> toks;
  for (std::string line; std::getline(in, line);) toks.push_back(line);
  return Vocab(policy, std::move(toks));
}

Vocab build_vocab(std::span<const Pair> pairs, TokenPolicy policy, std::size_t max_size, std::size_t min_count) {
  if (max_size < kNumSpecial + 1) throw std::invalid_argument("build_vocab: max_size must be >= 5");
  std::map<std::string, std::size_t> counts;
  for (const auto& p : pairs) {
    for (auto& t : tokenize(p.source, policy)) ++counts[t];
    for (auto& t : tokenize(p.summary, policy)) ++counts[t];
  }
  const Vocab specials(policy);
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts)
    if (n >= min_count && !specials.contains(tok)) ranked.emplace_back(tok, n);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> kept;
  for (auto& [tok, n] : ranked) {
    if (kept.size() + kNumSpecial >= max_size) break;
    kept.push_back(tok);
  }
  return Vocab(policy, std::move(kept));
}

std::vector<EncodedPair> encode_pairs(std::span<const Pair> pairs, const Vocab& vocab) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    EncodedPair e{vocab.encode(p.source), vocab.encode_target(p.summary)};
    if (e.source.empty()) throw std::invalid_argument("pair '" + p.id + "' has no source tokens");
    out.push_back(std::move(e));
  }
  return out;
}

void SynthSpec::validate() const {
  if (!(spurious_rate >= 0 && spurious_rate <= 1)) throw std::invalid_argument("spurious_rate must be in [0,1]");
  if (min_segments == 0 || min_segments > max_segments) throw std::invalid_argument("invalid segment range");
  if (max_segments > content_vocab) throw std::invalid_argument("max_segments exceeds content vocabulary");
  if (max_repeat == 0) throw std::invalid_argument("max_repeat must be >= 1");
}

std::string synth_token(std::size_t index) {
  // CJK ideographs starting at U+4E00, three UTF-8 bytes each.
  const auto cp = static_cast<std::uint32_t>(0x4E00 + index);
  std::string s;
  s += static_cast<char>(0xE0 | (cp >> 12));
  s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
  s += static_cast<char>(0x80 | (cp & 0x3F));
  return s;
}

SynthCorpus synth_corpus(const SynthSpec& spec) {
  spec.validate();
  SynthCorpus c;
  for (std::size_t i = 0; i < spec.content_vocab; ++i) c.content_tokens.push_back(synth_token(i));

  Rng map_rng(spec.seed, 0);
  c.bijection.resize(spec.content_vocab);
  for (std::size_t i = 0; i < spec.content_vocab; ++i) c.bijection[i] = i;
  map_rng.shuffle(c.bijection);

  const auto stream = 1 + static_cast<std::uint64_t>(spec.split);
  Rng rng(spec.seed, stream);
  Rng noise(spec.seed, 100 + stream);

  const auto n_spurious = static_cast<std::size_t>(std::llround(spec.spurious_rate * static_cast<double>(spec.num_pairs)));
  std::vector<std::size_t> order(spec.num_pairs);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  noise.shuffle(order);
  std::vector<bool> spurious(spec.num_pairs, false);
  for (std::size_t i = 0; i < n_spurious; ++i) spurious[order[i]] = true;

  std::vector<std::size_t> pool(spec.content_vocab);
  for (std::size_t i = 0; i < spec.num_pairs; ++i) {
    const auto k = spec.min_segments + rng.below(spec.max_segments - spec.min_segments + 1);
    for (std::size_t j = 0; j < pool.size(); ++j) pool[j] = j;
    // partial Fisher-Yates: the first k entries become the segment tokens
    for (std::size_t j = 0; j < k; ++j) std::swap(pool[j], pool[j + rng.below(pool.size() - j)]);
    Pair p;
    p.split = spec.split;
    for (std::size_t j = 0; j < k; ++j) {
      const auto reps = 1 + rng.below(spec.max_repeat);
      for (std::size_t r = 0; r < reps; ++r) p.source += c.content_tokens[pool[j]];
      p.summary += c.content_tokens[c.bijection[pool[j]]];
    }
    if (spurious[i]) {
      p.summary.clear();
      for (std::size_t j = 0; j < k; ++j) p.summary += c.content_tokens[noise.below(spec.content_vocab)];
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%06zu", std::string(split_name(spec.split)).c_str(), i);
    p.id = buf;
    c.pairs.push_back(std::move(p));
    c.clean.push_back(!spurious[i]);
  }
  return c;
}

void write_clean_sidecar(const std::filesystem::path& path, const SynthCorpus& corpus) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    json j;
    j["id"] = corpus.pairs[i].id;
    j["clean"] = static_cast<bool>(corpus.clean[i]);
    out << j.dump() << '\n';
  }
}

}  // namespace summ
