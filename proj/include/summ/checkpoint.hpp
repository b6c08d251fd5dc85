#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "summ/model.hpp"

namespace summ {

struct TrainingProgress {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;

  friend bool operator==(const TrainingProgress&, const TrainingProgress&) = default;
};

struct Checkpoint {
  ModelParams params;
  TrainingProgress progress;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layout: a text manifest (config, progress counters, and one
// "tensor <key> <dtype> <dims...> offset <bytes>" line per parameter) closed
// by an "end" line, followed by the raw little-endian IEEE-754 arrays.
// Offsets are relative to the first byte after the manifest.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

std::string checkpoint_bytes(const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace summ
