#pragma once

#include <cstdint>

namespace summ {

using TokenId = std::uint32_t;

// Reserved ids present in every vocabulary.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kNumSpecial = 4;

}  // namespace summ
