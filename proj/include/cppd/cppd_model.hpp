#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cppd/encoder.hpp"
#include "cppd/nn.hpp"

namespace cppd {

// Streams of the master seed, fixed so that every decoder variant builds a
// bitwise-identical encoder for the same seed.
constexpr uint64_t kEncParamStream = 1;
constexpr uint64_t kDecParamStream = 2;

struct CppdConfig {
  int s = 0;  // symbol count
  int l = 0;  // max sequence capacity
  int d = 64;
  int module_depth = 2;
  int heads = 4;
  int mlp_ratio = 4;

  int vocab() const { return s + 2; }
  void validate() const {
    if (s <= 0 || l <= 0) throw std::invalid_argument("cppd: S and L must be positive");
    if (module_depth != 2 && module_depth != 3)
      throw std::invalid_argument("cppd: module_depth must be 2 or 3");
    if (d % heads != 0) throw std::invalid_argument("cppd: heads must divide D");
  }
};

/// Counting and ordering query embeddings, both truncated normal with
/// mean 0 and std 0.2.
template <class T>
std::pair<Tensor<T>, Tensor<T>> init_embeddings(int s, int l, int d, Pcg32& rng) {
  return {nn::trunc_normal_init<T>({s, d}, 0.0, nn::kEmbedStd, rng),
          nn::trunc_normal_init<T>({l, d}, 0.0, nn::kEmbedStd, rng)};
}

/// One CC/CO mixing block: concat [F; E] along the token axis, pre-norm
/// self-attention and MLP with residuals, then slice back to (F', E').
template <class T>
struct CppdBlock {
  nn::LayerNormLayer<T> ln1, ln2;
  nn::MhaLayer<T> attn;
  nn::MlpLayer<T> mlp;

  CppdBlock() = default;
  CppdBlock(nn::ParamStore<T>& ps, const std::string& prefix, int d, int heads, int ratio,
            Pcg32& rng)
      : ln1(ps, prefix + ".ln1", d),
        ln2(ps, prefix + ".ln2", d),
        attn(ps, prefix + ".attn", d, heads, rng),
        mlp(ps, prefix + ".mlp", d, ratio, rng) {}

  std::pair<nn::Var<T>, nn::Var<T>> forward(const nn::Var<T>& f, const nn::Var<T>& e,
                                            nn::AttnRecord<T>* record = nullptr) const {
    int tv = f->val.dim(1);
    int te = e->val.dim(1);
    auto z = ag::concat_tokens(f, e);
    auto h = ln1.forward(z);
    z = ag::add(z, attn.forward(h, h, nullptr, record));
    z = ag::add(z, mlp.forward(ln2.forward(z)));
    return {ag::slice_tokens(z, 0, tv), ag::slice_tokens(z, tv, tv + te)};
  }
};

/// Fusion: one pre-norm Transformer block with cross-attention; ordering
/// queries attend counting-refined visual tokens as key/value.
template <class T>
struct FuseBlock {
  nn::LayerNormLayer<T> ln1, ln2;
  nn::MhaLayer<T> attn;
  nn::MlpLayer<T> mlp;

  FuseBlock() = default;
  FuseBlock(nn::ParamStore<T>& ps, const std::string& prefix, int d, int heads, int ratio,
            Pcg32& rng)
      : ln1(ps, prefix + ".ln1", d),
        ln2(ps, prefix + ".ln2", d),
        attn(ps, prefix + ".attn", d, heads, rng),
        mlp(ps, prefix + ".mlp", d, ratio, rng) {}

  nn::Var<T> forward(const nn::Var<T>& queries, const nn::Var<T>& kv,
                     nn::AttnRecord<T>* record = nullptr) const {
    auto x = ag::add(queries, attn.forward(ln1.forward(queries), kv, nullptr, record));
    x = ag::add(x, mlp.forward(ln2.forward(x)));
    return x;
  }
};

template <class T>
struct CppdOutput {
  nn::Var<T> cc_logits;   // (B, S, L+1)
  nn::Var<T> co_logits;   // (B, L)
  nn::Var<T> rec_logits;  // (B, L, V)
  std::vector<nn::AttnRecord<T>> attn;
};

/// The full decoder: CC and CO modules share structure but never parameters,
/// fusion pairs ordering queries with counting-refined visual tokens, and
/// three linear heads emit all logits in one pass.
template <class T>
class CppdModel {
 public:
  CppdConfig cfg;
  nn::ParamStore<T> store;
  Encoder<T>* encoder() { return enc_.get(); }
  const Encoder<T>& enc() const { return *enc_; }

  CppdModel(const CppdConfig& cfg_, const EncoderConfig& ec, uint64_t seed) : cfg(cfg_) {
    cfg.validate();
    if (ec.d != cfg.d) throw std::invalid_argument("cppd: encoder D must match decoder D");
    Pcg32 enc_rng(seed, kEncParamStream);
    Pcg32 dec_rng(seed, kDecParamStream);
    enc_ = std::make_unique<Encoder<T>>(store, ec, enc_rng);
    auto [ecc, eco] = init_embeddings<T>(cfg.s, cfg.l, cfg.d, dec_rng);
    e_cc = store.add("cppd.e_cc", std::move(ecc));
    e_co = store.add("cppd.e_co", std::move(eco));
    for (int i = 0; i < cfg.module_depth; ++i)
      cc_blocks.emplace_back(store, "cppd.cc" + std::to_string(i), cfg.d, cfg.heads,
                             cfg.mlp_ratio, dec_rng);
    for (int i = 0; i < cfg.module_depth; ++i)
      co_blocks.emplace_back(store, "cppd.co" + std::to_string(i), cfg.d, cfg.heads,
                             cfg.mlp_ratio, dec_rng);
    fuse = FuseBlock<T>(store, "cppd.fuse", cfg.d, cfg.heads, cfg.mlp_ratio, dec_rng);
    head_cc = nn::LinearLayer<T>(store, "cppd.head_cc", cfg.d, cfg.l + 1, dec_rng);
    head_co = nn::LinearLayer<T>(store, "cppd.head_co", cfg.d, 1, dec_rng);
    head_rec = nn::LinearLayer<T>(store, "cppd.head_rec", cfg.d, cfg.vocab(), dec_rng);
  }

  /// Runs one branch module: module_depth chained blocks over (F_v, E).
  std::pair<nn::Var<T>, nn::Var<T>> run_module(const std::vector<CppdBlock<T>>& blocks,
                                               nn::Var<T> f, nn::Var<T> e,
                                               const char* branch,
                                               std::vector<nn::AttnRecord<T>>* records) const {
    for (size_t i = 0; i < blocks.size(); ++i) {
      nn::AttnRecord<T> rec;
      auto [f2, e2] = blocks[i].forward(f, e, records ? &rec : nullptr);
      if (records) {
        rec.branch = branch;
        rec.layer = static_cast<int>(i);
        records->push_back(std::move(rec));
      }
      f = f2;
      e = e2;
    }
    return {f, e};
  }

  /// Single-pass forward. Side heads can be skipped; the recognition path is
  /// unaffected because the heads are leaves.
  CppdOutput<T> forward(const Tensor<T>& images, bool with_side_heads = true,
                        bool record_attn = true) const {
    CppdOutput<T> out;
    auto f_v = enc_->encode(images);
    int b = images.dim(0);
    auto ecc_b = ag::tile_rows(e_cc, b);
    auto eco_b = ag::tile_rows(e_co, b);
    auto* recs = record_attn ? &out.attn : nullptr;
    auto [f_cc, ecc_hat] = run_module(cc_blocks, f_v, ecc_b, "cc", recs);
    auto [f_co, eco_hat] = run_module(co_blocks, f_v, eco_b, "co", recs);
    (void)f_co;  // the ordering-refined visual tokens feed no head
    nn::AttnRecord<T> frec;
    auto g = fuse.forward(eco_hat, f_cc, record_attn ? &frec : nullptr);
    if (record_attn) {
      frec.branch = "fuse";
      frec.layer = 0;
      out.attn.push_back(std::move(frec));
    }
    if (with_side_heads) {
      out.cc_logits = head_cc.forward(ecc_hat);
      out.co_logits = ag::reshape(head_co.forward(eco_hat), {b, cfg.l});
    }
    out.rec_logits = head_rec.forward(g);
    return out;
  }

  nn::Var<T> e_cc, e_co;
  std::vector<CppdBlock<T>> cc_blocks, co_blocks;
  FuseBlock<T> fuse;
  nn::LinearLayer<T> head_cc, head_co, head_rec;

 private:
  std::unique_ptr<Encoder<T>> enc_;
};

}  // namespace cppd
