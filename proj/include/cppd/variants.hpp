#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "cppd/cppd_model.hpp"
#include "cppd/encoder.hpp"
#include "cppd/nn.hpp"

namespace cppd {

enum class VariantKind { AR, AR_P, AR_L, AR_L_P, PD, PD_P, CPPD };

inline const char* variant_name(VariantKind k) {
  switch (k) {
    case VariantKind::AR: return "ar";
    case VariantKind::AR_P: return "ar-p";
    case VariantKind::AR_L: return "ar-l";
    case VariantKind::AR_L_P: return "ar-l-p";
    case VariantKind::PD: return "pd";
    case VariantKind::PD_P: return "pd-p";
    case VariantKind::CPPD: return "cppd";
  }
  return "?";
}

inline VariantKind parse_variant(const std::string& s) {
  for (VariantKind k : {VariantKind::AR, VariantKind::AR_P, VariantKind::AR_L,
                        VariantKind::AR_L_P, VariantKind::PD, VariantKind::PD_P,
                        VariantKind::CPPD})
    if (s == variant_name(k)) return k;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

inline bool is_ar_kind(VariantKind k) {
  return k == VariantKind::AR || k == VariantKind::AR_P || k == VariantKind::AR_L ||
         k == VariantKind::AR_L_P;
}
inline bool is_permuted(VariantKind k) {
  return k == VariantKind::AR_P || k == VariantKind::AR_L_P;
}
inline bool has_self_attention(VariantKind k) {
  return k == VariantKind::AR || k == VariantKind::AR_P;
}

/// Uniform random permutation of {1..t} (Fisher-Yates).
inline std::vector<int> uniform_permutation(int t, Pcg32& rng) {
  std::vector<int> perm(static_cast<size_t>(t));
  std::iota(perm.begin(), perm.end(), 1);
  for (int i = t - 1; i > 0; --i) {
    int j = static_cast<int>(rng.next_below(static_cast<uint32_t>(i + 1)));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  return perm;
}

/// Training permutation: the canonical left-to-right order with probability
/// 0.5, otherwise a uniform draw.
inline std::vector<int> sample_permutation(int t, Pcg32& rng) {
  if (rng.next_double() < 0.5) {
    std::vector<int> perm(static_cast<size_t>(t));
    std::iota(perm.begin(), perm.end(), 1);
    return perm;
  }
  return uniform_permutation(t, rng);
}

struct VariantConfig {
  int s = 0;
  int l = 0;
  int d = 64;
  int depth = 2;
  int heads = 4;
  int mlp_ratio = 4;

  int vocab() const { return s + 2; }
  void validate() const {
    if (s <= 0 || l <= 0) throw std::invalid_argument("variant: S and L must be positive");
    if (d % heads != 0) throw std::invalid_argument("variant: heads must divide D");
  }
};

// ---------------------------------------------------------------------------
// AR family
// ---------------------------------------------------------------------------

template <class T>
struct ArBlock {
  bool has_self = false;
  nn::LayerNormLayer<T> ln1, ln2, ln3;
  nn::MhaLayer<T> self_attn, cross;
  nn::MlpLayer<T> mlp;

  ArBlock() = default;
  ArBlock(nn::ParamStore<T>& ps, const std::string& prefix, int d, int heads, int ratio,
          bool with_self, Pcg32& rng)
      : has_self(with_self) {
    if (has_self) {
      ln1 = nn::LayerNormLayer<T>(ps, prefix + ".ln1", d);
      self_attn = nn::MhaLayer<T>(ps, prefix + ".self", d, heads, rng);
    }
    ln2 = nn::LayerNormLayer<T>(ps, prefix + ".ln2", d);
    cross = nn::MhaLayer<T>(ps, prefix + ".cross", d, heads, rng);
    ln3 = nn::LayerNormLayer<T>(ps, prefix + ".ln3", d);
    mlp = nn::MlpLayer<T>(ps, prefix + ".mlp", d, ratio, rng);
  }

  /// content is the static token-embedding stream; the evolving query state
  /// never becomes a key, so masked context is exact at any depth.
  nn::Var<T> forward(nn::Var<T> x, const nn::Var<T>& content, const Tensor<T>* content_mask,
                     const nn::Var<T>& f_v, std::vector<nn::AttnRecord<T>>* records,
                     int layer) const {
    if (has_self) {
      nn::AttnRecord<T> rec;
      x = ag::add(x, self_attn.forward(ln1.forward(x), content, content_mask,
                                       records ? &rec : nullptr));
      if (records) {
        rec.branch = "self";
        rec.layer = layer;
        records->push_back(std::move(rec));
      }
    }
    nn::AttnRecord<T> rec;
    x = ag::add(x, cross.forward(ln2.forward(x), f_v, nullptr, records ? &rec : nullptr));
    if (records) {
      rec.branch = "cross";
      rec.layer = layer;
      records->push_back(std::move(rec));
    }
    x = ag::add(x, mlp.forward(ln3.forward(x)));
    return x;
  }
};

/// Autoregressive decoder family. Slot t predicts label slot t; context
/// enters through a permutation-masked attention over the shifted target
/// tokens (AR / AR-P) or through the previous token fed as the query itself
/// (AR-L / AR-L-P).
template <class T>
class ArModel {
 public:
  VariantKind kind;
  VariantConfig cfg;
  nn::ParamStore<T> store;
  mutable int64_t decode_passes = 0;

  ArModel(VariantKind kind_, const VariantConfig& cfg_, const EncoderConfig& ec, uint64_t seed)
      : kind(kind_), cfg(cfg_) {
    if (!is_ar_kind(kind)) throw std::invalid_argument("ArModel: not an AR variant");
    cfg.validate();
    if (ec.d != cfg.d) throw std::invalid_argument("variant: encoder D must match decoder D");
    Pcg32 enc_rng(seed, kEncParamStream);
    Pcg32 dec_rng(seed, kDecParamStream);
    enc_ = std::make_unique<Encoder<T>>(store, ec, enc_rng);
    tok_embed = store.add("ar.tok_embed", nn::trunc_normal_init<T>(
                                              {cfg.vocab() + 1, cfg.d}, 0.0, nn::kEmbedStd,
                                              dec_rng));  // extra row is BOS
    pos_q = store.add("ar.pos_q",
                      nn::trunc_normal_init<T>({cfg.l, cfg.d}, 0.0, nn::kEmbedStd, dec_rng));
    if (has_self_attention(kind))
      pos_c = store.add("ar.pos_c",
                        nn::trunc_normal_init<T>({cfg.l, cfg.d}, 0.0, nn::kEmbedStd, dec_rng));
    for (int i = 0; i < cfg.depth; ++i)
      blocks_.emplace_back(store, "ar.block" + std::to_string(i), cfg.d, cfg.heads,
                           cfg.mlp_ratio, has_self_attention(kind), dec_rng);
    head = nn::LinearLayer<T>(store, "ar.head", cfg.d, cfg.vocab(), dec_rng);
  }

  int bos_id() const { return cfg.vocab(); }
  const Encoder<T>& enc() const { return *enc_; }

  /// Canonical order for plain kinds, sampled permutations for the -P kinds;
  /// perms[b] permutes {1..N_b} where N_b is the character count.
  std::vector<std::vector<int>> make_perms(const std::vector<int>& labels, int batch,
                                           Pcg32& rng) const {
    std::vector<std::vector<int>> perms(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      int n = chars_of(labels, b);
      perms[static_cast<size_t>(b)] =
          is_permuted(kind) ? sample_permutation(n, rng) : canonical(n);
    }
    return perms;
  }

  /// Teacher-forced logits for all L slots; the loss masks PAD slots.
  nn::Var<T> train_forward(const Tensor<T>& images, const std::vector<int>& labels,
                           const std::vector<std::vector<int>>& perms,
                           std::vector<nn::AttnRecord<T>>* records = nullptr) const {
    int b = images.dim(0);
    int l = cfg.l;
    if (static_cast<int>(labels.size()) != b * l)
      throw std::invalid_argument("ar: labels size mismatch");
    auto f_v = enc_->encode(images);
    nn::Var<T> x;
    nn::Var<T> content;
    Tensor<T> mask;
    const Tensor<T>* mask_ptr = nullptr;
    if (has_self_attention(kind)) {
      // content tokens p=0..L-1 carry [BOS, y_1..y_{L-1}]
      std::vector<int> ctoks(static_cast<size_t>(b) * l);
      for (int bi = 0; bi < b; ++bi) {
        ctoks[static_cast<size_t>(bi) * l] = bos_id();
        for (int p = 1; p < l; ++p)
          ctoks[static_cast<size_t>(bi) * l + p] = labels[static_cast<size_t>(bi) * l + p - 1];
      }
      content = ag::add_rows(ag::embedding(tok_embed, ctoks, b, l), pos_c);
      mask = build_content_mask(perms, b);
      mask_ptr = &mask;
      x = ag::tile_rows(pos_q, b);
    } else {
      // query slot t carries the token preceding it in factorization order
      std::vector<int> qtoks = limited_query_tokens(labels, perms, b);
      x = ag::add_rows(ag::embedding(tok_embed, qtoks, b, l), pos_q);
    }
    for (size_t i = 0; i < blocks_.size(); ++i)
      x = blocks_[static_cast<size_t>(i)].forward(x, content, mask_ptr, f_v, records,
                                                  static_cast<int>(i));
    return head.forward(x);
  }

  /// Greedy left-to-right decode: the block stack is re-run on the growing
  /// prefix every step, the standard research-code loop whose cost grows
  /// with emitted length. Returns emitted ids without the EOS.
  std::vector<int> greedy_decode(const Tensor<T>& image, int max_len = -1) const {
    ag::NoGrad guard;
    if (max_len < 0) max_len = cfg.l;
    auto f_v = enc_->encode(image);
    std::vector<int> emitted;
    for (int t = 1; t <= max_len; ++t) {
      ++decode_passes;
      nn::Var<T> x;
      nn::Var<T> content;
      Tensor<T> mask;
      const Tensor<T>* mask_ptr = nullptr;
      if (has_self_attention(kind)) {
        std::vector<int> ctoks(static_cast<size_t>(t));
        ctoks[0] = bos_id();
        for (int p = 1; p < t; ++p) ctoks[static_cast<size_t>(p)] = emitted[static_cast<size_t>(p - 1)];
        content = ag::add(ag::embedding(tok_embed, ctoks, 1, t),
                          ag::slice_tokens(ag::tile_rows(pos_c, 1), 0, t));
        mask = causal_mask(t, t);
        mask_ptr = &mask;
        x = ag::slice_tokens(ag::tile_rows(pos_q, 1), 0, t);
      } else {
        std::vector<int> qtoks(static_cast<size_t>(t));
        qtoks[0] = bos_id();
        for (int p = 1; p < t; ++p) qtoks[static_cast<size_t>(p)] = emitted[static_cast<size_t>(p - 1)];
        x = ag::add(ag::embedding(tok_embed, qtoks, 1, t),
                    ag::slice_tokens(ag::tile_rows(pos_q, 1), 0, t));
      }
      for (size_t i = 0; i < blocks_.size(); ++i)
        x = blocks_[i].forward(x, content, mask_ptr, f_v, nullptr, static_cast<int>(i));
      auto logits = head.forward(x);  // (1, t, V)
      const T* last = logits->val.data() + static_cast<int64_t>(t - 1) * cfg.vocab();
      int best = 0;
      for (int c = 1; c < cfg.vocab(); ++c)
        if (last[c] > last[best]) best = c;
      if (best == cfg.s) break;  // EOS
      emitted.push_back(best);
    }
    return emitted;
  }

  nn::Var<T> tok_embed, pos_q, pos_c;
  nn::LinearLayer<T> head;

 private:
  static std::vector<int> canonical(int n) {
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 1);
    return perm;
  }

  int chars_of(const std::vector<int>& labels, int b) const {
    int n = 0;
    while (n < cfg.l && labels[static_cast<size_t>(b) * cfg.l + n] < cfg.s) ++n;
    return n;
  }

  /// Additive mask over content tokens. Row for slot k_j admits exactly
  /// {BOS} plus the permutation prefix {y_{k_1}..y_{k_{j-1}}}; the EOS slot
  /// sees every character; slots past EOS fall back to causal (loss-masked).
  Tensor<T> build_content_mask(const std::vector<std::vector<int>>& perms, int b) const {
    int l = cfg.l;
    Tensor<T> mask({b, l, l});
    mask.fill(static_cast<T>(ag::kMaskNegInf));
    for (int bi = 0; bi < b; ++bi) {
      const auto& k = perms[static_cast<size_t>(bi)];
      int n = static_cast<int>(k.size());
      T* m = mask.data() + static_cast<int64_t>(bi) * l * l;
      auto allow = [&](int slot, int p) { m[static_cast<int64_t>(slot - 1) * l + p] = T(0); };
      for (int j = 0; j < n; ++j) {
        int slot = k[static_cast<size_t>(j)];
        allow(slot, 0);
        for (int i = 0; i < j; ++i) allow(slot, k[static_cast<size_t>(i)]);
      }
      for (int t = n + 1; t <= l; ++t)  // EOS and pad slots: plain causal
        for (int p = 0; p < t; ++p) allow(t, p);
    }
    return mask;
  }

  static Tensor<T> causal_mask(int tq, int tk) {
    Tensor<T> mask({tq, tk});
    for (int i = 0; i < tq; ++i)
      for (int j = 0; j < tk; ++j)
        mask.at({i, j}) = j <= i ? T(0) : static_cast<T>(ag::kMaskNegInf);
    return mask;
  }

  /// Query token ids for the limited-context kinds: slot k_j carries the
  /// character decoded at the previous factorization step.
  std::vector<int> limited_query_tokens(const std::vector<int>& labels,
                                        const std::vector<std::vector<int>>& perms,
                                        int b) const {
    int l = cfg.l;
    std::vector<int> qtoks(static_cast<size_t>(b) * l);
    for (int bi = 0; bi < b; ++bi) {
      const auto& k = perms[static_cast<size_t>(bi)];
      int n = static_cast<int>(k.size());
      auto label_at = [&](int slot) { return labels[static_cast<size_t>(bi) * l + slot - 1]; };
      auto q = [&](int slot) -> int& { return qtoks[static_cast<size_t>(bi) * l + slot - 1]; };
      for (int j = 0; j < n; ++j)
        q(k[static_cast<size_t>(j)]) = j == 0 ? bos_id() : label_at(k[static_cast<size_t>(j - 1)]);
      if (n + 1 <= l) q(n + 1) = n == 0 ? bos_id() : label_at(k[static_cast<size_t>(n - 1)]);
      for (int t = n + 2; t <= l; ++t) q(t) = label_at(t - 1);
    }
    return qtoks;
  }

  std::unique_ptr<Encoder<T>> enc_;
  std::vector<ArBlock<T>> blocks_;
};

// ---------------------------------------------------------------------------
// PD family
// ---------------------------------------------------------------------------

template <class T>
struct PdBlock {
  nn::LayerNormLayer<T> ln1, ln2;
  nn::MhaLayer<T> cross;
  nn::MlpLayer<T> mlp;

  PdBlock() = default;
  PdBlock(nn::ParamStore<T>& ps, const std::string& prefix, int d, int heads, int ratio,
          Pcg32& rng)
      : ln1(ps, prefix + ".ln1", d),
        ln2(ps, prefix + ".ln2", d),
        cross(ps, prefix + ".cross", d, heads, rng),
        mlp(ps, prefix + ".mlp", d, ratio, rng) {}

  nn::Var<T> forward(nn::Var<T> x, const nn::Var<T>& f_v,
                     nn::AttnRecord<T>* record = nullptr) const {
    x = ag::add(x, cross.forward(ln1.forward(x), f_v, nullptr, record));
    x = ag::add(x, mlp.forward(ln2.forward(x)));
    return x;
  }
};

/// Parallel decoder: L content-free learned position queries cross-attend
/// the visual tokens once. PD-P adds a character head on the first block's
/// output (the pre-decoding features), dropped at inference.
template <class T>
class PdModel {
 public:
  VariantKind kind;
  VariantConfig cfg;
  nn::ParamStore<T> store;
  mutable int64_t decode_passes = 0;

  PdModel(VariantKind kind_, const VariantConfig& cfg_, const EncoderConfig& ec, uint64_t seed)
      : kind(kind_), cfg(cfg_) {
    if (kind != VariantKind::PD && kind != VariantKind::PD_P)
      throw std::invalid_argument("PdModel: not a PD variant");
    cfg.validate();
    if (ec.d != cfg.d) throw std::invalid_argument("variant: encoder D must match decoder D");
    Pcg32 enc_rng(seed, kEncParamStream);
    Pcg32 dec_rng(seed, kDecParamStream);
    enc_ = std::make_unique<Encoder<T>>(store, ec, enc_rng);
    pos_q = store.add("pd.pos_q",
                      nn::trunc_normal_init<T>({cfg.l, cfg.d}, 0.0, nn::kEmbedStd, dec_rng));
    for (int i = 0; i < cfg.depth; ++i)
      blocks_.emplace_back(store, "pd.block" + std::to_string(i), cfg.d, cfg.heads,
                           cfg.mlp_ratio, dec_rng);
    head = nn::LinearLayer<T>(store, "pd.head", cfg.d, cfg.vocab(), dec_rng);
    if (kind == VariantKind::PD_P)
      side_head = nn::LinearLayer<T>(store, "pd.side_head", cfg.d, cfg.vocab(), dec_rng);
  }

  const Encoder<T>& enc() const { return *enc_; }

  struct Out {
    nn::Var<T> rec_logits;   // (B, L, V)
    nn::Var<T> side_logits;  // (B, L, V) when trained with the side head
  };

  Out forward(const Tensor<T>& images, std::vector<nn::AttnRecord<T>>* records = nullptr,
              bool with_side_head = true) const {
    ++decode_passes;
    auto f_v = enc_->encode(images);
    int b = images.dim(0);
    auto x = ag::tile_rows(pos_q, b);
    Out out;
    for (size_t i = 0; i < blocks_.size(); ++i) {
      nn::AttnRecord<T> rec;
      x = blocks_[i].forward(x, f_v, records ? &rec : nullptr);
      if (records) {
        rec.branch = "cross";
        rec.layer = static_cast<int>(i);
        records->push_back(std::move(rec));
      }
      if (i == 0 && kind == VariantKind::PD_P && with_side_head)
        out.side_logits = side_head.forward(x);
    }
    out.rec_logits = head.forward(x);
    return out;
  }

  nn::Var<T> pos_q;
  nn::LinearLayer<T> head, side_head;

 private:
  std::unique_ptr<Encoder<T>> enc_;
  std::vector<PdBlock<T>> blocks_;
};

}  // namespace cppd
