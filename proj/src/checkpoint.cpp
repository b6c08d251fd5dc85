#include "summ/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace summ {

namespace {

constexpr const char* kMagic = "summ-checkpoint 1";

constexpr const char* dtype_tag() { return sizeof(Real) == 8 ? "f64" : "f32"; }

template <typename T>
T byteswap_value(T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  std::memcpy(&v, b, sizeof(T));
  return v;
}

void write_le(std::ostream& out, const Tensor& t) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(Real)));
  } else {
    for (Real v : t.data()) {
      Real s = byteswap_value(v);
      out.write(reinterpret_cast<const char*>(&s), sizeof(Real));
    }
  }
}

void read_le(std::istream& in, Tensor& t) {
  in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(Real)));
  if (!in) throw CheckpointError("truncated tensor data");
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : t.storage()) v = byteswap_value(v);
  }
}

template <typename T>
T expect_field(std::istream& line, const std::string& name) {
  std::string key;
  T value{};
  if (!(line >> key) || key != name || !(line >> value))
    throw CheckpointError("expected manifest field '" + name + "'");
  return value;
}

std::string next_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError("unexpected end of checkpoint manifest");
  return line;
}

template <typename T>
T read_field(std::istream& in, const std::string& name) {
  std::istringstream ls(next_line(in));
  return expect_field<T>(ls, name);
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const auto& cfg = ckpt.params.config;
  std::ostringstream m;
  m << kMagic << '\n'
    << "vocab_size " << cfg.vocab_size << '\n'
    << "embedding_size " << cfg.embedding_size << '\n'
    << "hidden_size " << cfg.hidden_size << '\n'
    << "attention_size " << cfg.attention_size << '\n'
    << "mode " << mode_name(cfg.mode) << '\n'
    << "attention " << attention_name(cfg.attention) << '\n'
    << "seed " << cfg.seed << '\n'
    << "epoch " << ckpt.progress.epoch << '\n'
    << "step " << ckpt.progress.step << '\n'
    << "tensors " << ckpt.params.tensors.size() << '\n';
  std::size_t offset = 0;
  for (const auto& [key, t] : ckpt.params.tensors) {
    m << "tensor " << key << ' ' << dtype_tag();
    for (auto d : t.shape()) m << ' ' << d;
    m << " offset " << offset << '\n';
    offset += t.size() * sizeof(Real);
  }
  m << "end\n";
  out << m.str();
  for (const auto& [key, t] : ckpt.params.tensors) write_le(out, t);
  if (!out) throw CheckpointError("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  if (next_line(in) != kMagic) throw CheckpointError("not a checkpoint (bad magic line)");
  Checkpoint ck;
  auto& cfg = ck.params.config;
  cfg.vocab_size = read_field<std::size_t>(in, "vocab_size");
  cfg.embedding_size = read_field<std::size_t>(in, "embedding_size");
  cfg.hidden_size = read_field<std::size_t>(in, "hidden_size");
  cfg.attention_size = read_field<std::size_t>(in, "attention_size");
  cfg.mode = parse_mode(read_field<std::string>(in, "mode"));
  cfg.attention = parse_attention(read_field<std::string>(in, "attention"));
  cfg.seed = read_field<std::uint64_t>(in, "seed");
  ck.progress.epoch = read_field<std::uint64_t>(in, "epoch");
  ck.progress.step = read_field<std::uint64_t>(in, "step");
  const auto n = read_field<std::size_t>(in, "tensors");

  struct Entry {
    std::string key;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < n; ++i) {
    std::istringstream ls(next_line(in));
    std::string tag, key, dtype;
    ls >> tag >> key >> dtype;
    if (tag != "tensor") throw CheckpointError("expected tensor line, got '" + tag + "'");
    if (dtype != dtype_tag()) throw CheckpointError("tensor '" + key + "' has dtype " + dtype + ", build expects " + dtype_tag());
    Entry e{key, {}, 0};
    std::string tok;
    while (ls >> tok && tok != "offset") e.shape.push_back(std::stoull(tok));
    if (tok != "offset" || !(ls >> e.offset)) throw CheckpointError("tensor '" + key + "' lacks an offset");
    entries.push_back(std::move(e));
  }
  if (next_line(in) != "end") throw CheckpointError("manifest not terminated by 'end'");

  std::size_t expected = 0;
  for (auto& e : entries) {
    if (e.offset != expected) throw CheckpointError("tensor '" + e.key + "' offset out of sequence");
    Tensor t(e.shape);
    read_le(in, t);
    expected += t.size() * sizeof(Real);
    ck.params.tensors.emplace(e.key, std::move(t));
  }
  return ck;
}

std::string checkpoint_bytes(const Checkpoint& ckpt) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, ckpt);
  return os.str();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace summ
