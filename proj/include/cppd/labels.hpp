#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cppd/charset.hpp"
#include "cppd/tensor.hpp"

namespace cppd {

/// Per-symbol occurrence counts; counts[c] is how many times symbol c
/// appears in the text, so the count classes per symbol are 0..L.
struct CCLabel {
  std::vector<int> counts;  // length S
};

/// Content-free occupancy mask over the L reading-order slots: a prefix of
/// N ones followed by zeros for a text of length N.
struct COLabel {
  std::vector<uint8_t> mask;  // length L
};

/// Per-slot recognition classes: the symbol ids, then EOS, then PAD fill.
struct RecLabel {
  std::vector<int> slots;  // length L, values in [0, V)
};

/// Aggregated per-class target fractions (symbols plus pad), kept as exact
/// rationals with denominator L.
struct ACETarget {
  std::vector<int> numer;  // length S+1; last entry is the pad class
  int denom = 0;           // L

  double weight(int i) const { return static_cast<double>(numer[static_cast<size_t>(i)]) / denom; }
};

CCLabel encode_cc(std::string_view text, const CharSet& charset, int max_len);
COLabel encode_co(std::string_view text, int max_len);
RecLabel encode_rec(std::string_view text, const CharSet& charset, int max_len);
ACETarget encode_ace(std::string_view text, const CharSet& charset, int max_len);

/// Per-slot argmax over an L x V probability tensor, truncated at the first
/// EOS; PAD hit before EOS is skipped rather than treated as an error.
template <class T>
std::string decode_greedy(const Tensor<T>& rec_probs, const CharSet& charset);

/// Argmax decode over a plain id sequence (used by the AR greedy loop which
/// already produces ids).
std::string ids_to_text(const std::vector<int>& ids, const CharSet& charset);

/// Debug dump of all four supervision targets, one line per target type.
std::string format_labels(std::string_view text, const CharSet& charset, int max_len);

extern template std::string decode_greedy<float>(const Tensor<float>&, const CharSet&);
extern template std::string decode_greedy<double>(const Tensor<double>&, const CharSet&);

}  // namespace cppd
