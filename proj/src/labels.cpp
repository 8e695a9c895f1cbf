#include "cppd/labels.hpp"

#include <sstream>
#include <stdexcept>

namespace cppd {

namespace {

void check_text(std::string_view text, const CharSet& charset, int max_len) {
  if (static_cast<int>(text.size()) > max_len - 1)
    throw std::invalid_argument("labels: text of length " + std::to_string(text.size()) +
                                " leaves no room for EOS at L=" + std::to_string(max_len));
  for (char c : text) charset.id_of(c);  // throws naming the symbol
}

}  // namespace

CCLabel encode_cc(std::string_view text, const CharSet& charset, int max_len) {
  check_text(text, charset, max_len);
  CCLabel label;
  label.counts.assign(static_cast<size_t>(charset.size()), 0);
  for (char c : text) label.counts[static_cast<size_t>(charset.id_of(c))]++;
  return label;
}

COLabel encode_co(std::string_view text, int max_len) {
  if (static_cast<int>(text.size()) > max_len - 1)
    throw std::invalid_argument("labels: text too long for L=" + std::to_string(max_len));
  COLabel label;
  label.mask.assign(static_cast<size_t>(max_len), 0);
  for (size_t i = 0; i < text.size(); ++i) label.mask[i] = 1;
  return label;
}

RecLabel encode_rec(std::string_view text, const CharSet& charset, int max_len) {
  check_text(text, charset, max_len);
  RecLabel label;
  label.slots.assign(static_cast<size_t>(max_len), charset.pad_id());
  for (size_t i = 0; i < text.size(); ++i) label.slots[i] = charset.id_of(text[i]);
  label.slots[text.size()] = charset.eos_id();
  return label;
}

ACETarget encode_ace(std::string_view text, const CharSet& charset, int max_len) {
  check_text(text, charset, max_len);
  ACETarget target;
  target.numer.assign(static_cast<size_t>(charset.size()) + 1, 0);
  target.denom = max_len;
  for (char c : text) target.numer[static_cast<size_t>(charset.id_of(c))]++;
  target.numer.back() = max_len - static_cast<int>(text.size());  // pad mass
  return target;
}

template <class T>
std::string decode_greedy(const Tensor<T>& rec_probs, const CharSet& charset) {
  if (rec_probs.rank() != 2 || rec_probs.dim(1) != charset.vocab_size())
    throw std::invalid_argument("decode_greedy: expected L x V probabilities, got " +
                                rec_probs.shape_str());
  int slots = rec_probs.dim(0);
  int vocab = rec_probs.dim(1);
  std::vector<int> ids;
  for (int l = 0; l < slots; ++l) {
    const T* row = rec_probs.data() + static_cast<int64_t>(l) * vocab;
    int best = 0;
    for (int c = 1; c < vocab; ++c)
      if (row[c] > row[best]) best = c;
    ids.push_back(best);
  }
  return ids_to_text(ids, charset);
}

template std::string decode_greedy<float>(const Tensor<float>&, const CharSet&);
template std::string decode_greedy<double>(const Tensor<double>&, const CharSet&);

std::string ids_to_text(const std::vector<int>& ids, const CharSet& charset) {
  std::string out;
  for (int id : ids) {
    if (id == charset.eos_id()) break;
    if (id == charset.pad_id()) continue;  // pad before EOS is skipped
    out.push_back(charset.symbol(id));
  }
  return out;
}

std::string format_labels(std::string_view text, const CharSet& charset, int max_len) {
  CCLabel cc = encode_cc(text, charset, max_len);
  COLabel co = encode_co(text, max_len);
  RecLabel rec = encode_rec(text, charset, max_len);
  ACETarget ace = encode_ace(text, charset, max_len);

  std::ostringstream os;
  os << "CC";
  for (int c = 0; c < charset.size(); ++c)
    if (cc.counts[static_cast<size_t>(c)] > 0)
      os << ' ' << charset.symbol(c) << ':' << cc.counts[static_cast<size_t>(c)];
  os << '\n';

  os << "CO ";
  int ones = 0;
  for (uint8_t m : co.mask)
    if (m) {
      os << '1';
      ++ones;
    }
  os << " +" << (max_len - ones) << "x0\n";

  os << "REC";
  int pads = 0;
  for (int id : rec.slots) {
    if (id == charset.pad_id()) {
      ++pads;
      continue;
    }
    os << ' ' << charset.name_of(id);
  }
  if (pads > 0) os << " <pad>*" << pads;
  os << '\n';

  os << "ACE";
  for (int c = 0; c < charset.size(); ++c)
    if (ace.numer[static_cast<size_t>(c)] > 0)
      os << ' ' << charset.symbol(c) << ':' << ace.numer[static_cast<size_t>(c)] << '/'
         << ace.denom;
  os << " pad:" << ace.numer.back() << '/' << ace.denom << '\n';
  return os.str();
}

}  // namespace cppd
