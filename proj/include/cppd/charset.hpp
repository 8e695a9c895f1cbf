#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace cppd {

/// Ordered symbol alphabet with EOS/PAD bookkeeping. Symbol classes are
/// 0..S-1, eos_id = S, pad_id = S+1, so the prediction vocabulary has
/// V = S+2 classes.
class CharSet {
 public:
  explicit CharSet(const std::vector<char>& symbols);
  explicit CharSet(std::string_view symbols);

  /// The 36 case-insensitive alphanumerics (digits then lowercase letters).
  static CharSet alnum36();

  static CharSet from_file(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(symbols_.size()); }  // S
  int eos_id() const { return size(); }
  int pad_id() const { return size() + 1; }
  int vocab_size() const { return size() + 2; }  // V

  bool contains(char c) const { return index_[static_cast<unsigned char>(c)] >= 0; }

  /// Class id of a symbol; throws naming the symbol if unknown.
  int id_of(char c) const;

  char symbol(int id) const;
  const std::vector<char>& symbols() const { return symbols_; }

  /// Printable name of any class id: the symbol, "<eos>", or "<pad>".
  std::string name_of(int id) const;

  bool operator==(const CharSet& o) const { return symbols_ == o.symbols_; }

 private:
  void build_index();

  std::vector<char> symbols_;
  std::array<int, 256> index_{};
};

}  // namespace cppd
