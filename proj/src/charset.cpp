#include "cppd/charset.hpp"

#include <fstream>
#include <stdexcept>

namespace cppd {

CharSet::CharSet(const std::vector<char>& symbols) : symbols_(symbols) { build_index(); }

CharSet::CharSet(std::string_view symbols)
    : symbols_(symbols.begin(), symbols.end()) {
  build_index();
}

void CharSet::build_index() {
  if (symbols_.empty()) throw std::invalid_argument("charset: empty symbol list");
  index_.fill(-1);
  for (size_t i = 0; i < symbols_.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(symbols_[i]);
    if (index_[c] >= 0)
      throw std::invalid_argument(std::string("charset: duplicate symbol '") + symbols_[i] + "'");
    index_[c] = static_cast<int>(i);
  }
}

CharSet CharSet::alnum36() { return CharSet("0123456789abcdefghijklmnopqrstuvwxyz"); }

CharSet CharSet::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("charset: cannot open " + path);
  std::vector<char> symbols;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.size() != 1)
      throw std::runtime_error("charset: expected one symbol per line in " + path);
    symbols.push_back(line[0]);
  }
  return CharSet(symbols);
}

void CharSet::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("charset: cannot write " + path);
  for (char c : symbols_) out << c << '\n';
}

int CharSet::id_of(char c) const {
  int id = index_[static_cast<unsigned char>(c)];
  if (id < 0) throw std::invalid_argument(std::string("charset: unknown symbol '") + c + "'");
  return id;
}

char CharSet::symbol(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("charset: symbol id out of range");
  return symbols_[static_cast<size_t>(id)];
}

std::string CharSet::name_of(int id) const {
  if (id == eos_id()) return "<eos>";
  if (id == pad_id()) return "<pad>";
  return std::string(1, symbol(id));
}

}  // namespace cppd
