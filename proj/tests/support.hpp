#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "pfs/bytes.hpp"

namespace testing_support {

inline pfs::Bytes random_bytes(std::mt19937_64& rng, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<int> byte(0, 255);
  pfs::Bytes out(len(rng));
  for (auto& b : out) b = static_cast<std::uint8_t>(byte(rng));
  return out;
}

inline std::string random_token(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len,
                                const std::string& alphabet = "abcdefghijklmnopqrstuvwxyz0123456789") {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s(len(rng), ' ');
  for (char& c : s) c = alphabet[pick(rng)];
  return s;
}

inline int random_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace testing_support
