// fedlab/codec.hpp - sparse index codes for memory-task inputs.
//
// A code is a small vector of non-negative integers fed to the secret model.
// The default scheme writes the payload in the Zeckendorf (Fibonacci)
// numeral system over the table [1,2,3,5,8,13,21,34,55,...]: bit i carries
// value table[i], and no two adjacent bits are set. Binary and a
// Gray/one-hot baseline are provided for ablations.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedlab::codec {

using CodeVector = std::vector<std::uint32_t>;

enum class Scheme { fibonacci, binary, gray_onehot };

inline std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::fibonacci: return "fibonacci";
    case Scheme::binary: return "binary";
    case Scheme::gray_onehot: return "gray_onehot";
  }
  return "?";
}

inline Scheme scheme_from_name(const std::string& s) {
  if (s == "fibonacci") return Scheme::fibonacci;
  if (s == "binary") return Scheme::binary;
  if (s == "gray_onehot") return Scheme::gray_onehot;
  throw std::invalid_argument("unknown code scheme: " + s);
}

// Code table 1,2,3,5,8,... extended until it covers n.
inline std::vector<std::uint64_t> fib_table(std::uint64_t cover) {
  std::vector<std::uint64_t> t = {1, 2};
  while (t.back() < cover) t.push_back(t[t.size() - 1] + t[t.size() - 2]);
  return t;
}

// Greedy Zeckendorf decomposition. Greedy choice of the largest member <= n
// yields the unique representation with no two adjacent table entries.
// Result length is max(natural length, min_length); padding bits are zero.
inline CodeVector fib_encode(std::uint64_t n, std::size_t min_length = 0) {
  if (n == 0) throw std::domain_error("fib_encode: payload must be >= 1");
  auto table = fib_table(n);
  std::size_t top = table.size();
  while (top > 0 && table[top - 1] > n) --top;
  CodeVector bits(std::max(top, min_length), 0);
  std::uint64_t rem = n;
  for (std::size_t i = top; i-- > 0 && rem > 0;) {
    if (table[i] <= rem) {
      bits[i] = 1;
      rem -= table[i];
    }
  }
  return bits;
}

// Weighted sum over the table. Rejects malformed codes: empty, all-zero,
// entries outside {0,1}, or two adjacent set bits.
inline std::uint64_t fib_decode(const CodeVector& bits) {
  if (bits.empty()) throw std::invalid_argument("fib_decode: empty code");
  auto table = fib_table(std::uint64_t(1) << 1);
  while (table.size() < bits.size()) table.push_back(table[table.size() - 1] + table[table.size() - 2]);
  std::uint64_t sum = 0;
  bool any = false;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] > 1) throw std::invalid_argument("fib_decode: entry outside {0,1}");
    if (bits[i] == 1 && i + 1 < bits.size() && bits[i + 1] == 1)
      throw std::invalid_argument("fib_decode: adjacent set bits");
    if (bits[i] == 1) {
      sum += table[i];
      any = true;
    }
  }
  if (!any) throw std::invalid_argument("fib_decode: no set bits");
  return sum;
}

// Little-endian base-2: bit i carries 2^i.
inline CodeVector binary_index(std::uint64_t i, std::size_t min_length = 0) {
  if (i == 0) throw std::domain_error("binary_index: payload must be >= 1");
  CodeVector bits;
  for (std::uint64_t x = i; x > 0; x >>= 1) bits.push_back(std::uint32_t(x & 1));
  while (bits.size() < min_length) bits.push_back(0);
  return bits;
}

// Gray/one-hot baseline. Follows the additive construction of the worked
// examples: the intra-class ordinal i occupies the trailing slot and the
// class-c slot (counted from the tail, class 0 = last) gains n_bits, so the
// first two class-0 samples at n_bits=10 read (...,0,11) and (...,0,12).
// Consecutive ordinals differ in a single coordinate, which is exactly the
// weakness the sparse scheme is measured against.
inline CodeVector gray_onehot_index(std::uint64_t i, std::uint32_t c, std::size_t n_bits) {
  if (i == 0) throw std::domain_error("gray_onehot_index: ordinal must be >= 1");
  if (n_bits == 0) throw std::domain_error("gray_onehot_index: n_bits must be >= 1");
  if (n_bits < 64 && i > (std::uint64_t(1) << n_bits) - 1)
    throw std::domain_error("gray_onehot_index: ordinal too large for n_bits");
  if (c >= n_bits) throw std::domain_error("gray_onehot_index: class slot outside code");
  CodeVector code(n_bits, 0);
  code[n_bits - 1] += std::uint32_t(i);
  code[n_bits - 1 - c] += std::uint32_t(n_bits);
  return code;
}

// ===== Block codes ===========================================================

struct BlockCodeSpec {
  Scheme scheme = Scheme::fibonacci;
  std::size_t sample_len = 9;  // slots reserved for the sample index
  std::size_t block_len = 5;   // slots reserved for the block index
  bool include_class = false;  // insert the class id between the halves
};

namespace detail {
inline CodeVector encode_half(Scheme scheme, std::uint64_t value, std::size_t len,
                              const char* what) {
  CodeVector half;
  switch (scheme) {
    case Scheme::fibonacci: half = fib_encode(value, len); break;
    case Scheme::binary: half = binary_index(value, len); break;
    case Scheme::gray_onehot:
      throw std::invalid_argument("block codes use fibonacci or binary payloads");
  }
  if (half.size() > len)
    throw std::length_error(std::string(what) + " payload " + std::to_string(value) +
                            " needs " + std::to_string(half.size()) + " slots, limit is " +
                            std::to_string(len));
  return half;
}
}  // namespace detail

// Concatenation encode(n) | [c] | encode(p), each half zero-padded to its
// fixed width so every (n, p) pair maps to one code length.
inline CodeVector build_block_code(std::uint64_t n, std::uint64_t p, const BlockCodeSpec& spec,
                                   std::uint32_t c = 0) {
  CodeVector code = detail::encode_half(spec.scheme, n, spec.sample_len, "sample");
  if (spec.include_class) code.push_back(c);
  CodeVector block = detail::encode_half(spec.scheme, p, spec.block_len, "block");
  code.insert(code.end(), block.begin(), block.end());
  return code;
}

inline std::size_t block_code_length(const BlockCodeSpec& spec) {
  return spec.sample_len + spec.block_len + (spec.include_class ? 1 : 0);
}

}  // namespace fedlab::codec
