#pragma once

#include <vector>

#include "cppd/nn.hpp"

namespace cppd {

/// Toy visual encoder honoring the F_v shape contract: an H x W image maps
/// to (H/16)*(W/4) tokens of width D.
struct EncoderConfig {
  int h = 32;
  int w = 100;
  int d = 64;
  int depth = 2;
  int heads = 4;
  int mlp_ratio = 4;

  int tokens() const { return (h / 16) * (w / 4); }
  void validate() const {
    if (h % 16 != 0 || w % 4 != 0)
      throw std::invalid_argument("encoder: H must be divisible by 16 and W by 4");
    if (d % heads != 0) throw std::invalid_argument("encoder: heads must divide D");
  }
};

constexpr int kPatchH = 16;
constexpr int kPatchW = 4;

/// (B,H,W) image batch -> (B,Tv,16*4) patch rows, kernel = stride = (16,4).
template <class T>
Tensor<T> patchify(const Tensor<T>& images, const EncoderConfig& cfg) {
  if (images.rank() != 3 || images.dim(1) != cfg.h || images.dim(2) != cfg.w)
    throw std::invalid_argument("encoder: image batch shape " + images.shape_str() +
                                " does not match config");
  int b = images.dim(0), gh = cfg.h / kPatchH, gw = cfg.w / kPatchW;
  Tensor<T> out({b, gh * gw, kPatchH * kPatchW});
  for (int bi = 0; bi < b; ++bi)
    for (int py = 0; py < gh; ++py)
      for (int px = 0; px < gw; ++px) {
        T* dst = out.data() +
                 ((static_cast<int64_t>(bi) * gh * gw) + py * gw + px) * (kPatchH * kPatchW);
        for (int y = 0; y < kPatchH; ++y)
          for (int x = 0; x < kPatchW; ++x)
            dst[y * kPatchW + x] =
                images.at({bi, py * kPatchH + y, px * kPatchW + x});
      }
  return out;
}

template <class T>
struct EncBlock {
  nn::LayerNormLayer<T> ln1, ln2;
  nn::MhaLayer<T> attn;
  nn::MlpLayer<T> mlp;

  EncBlock(nn::ParamStore<T>& ps, const std::string& prefix, int d, int heads, int ratio,
           Pcg32& rng)
      : ln1(ps, prefix + ".ln1", d),
        ln2(ps, prefix + ".ln2", d),
        attn(ps, prefix + ".attn", d, heads, rng),
        mlp(ps, prefix + ".mlp", d, ratio, rng) {}

  nn::Var<T> forward(nn::Var<T> x) const {
    auto h = ln1.forward(x);
    x = ag::add(x, attn.forward(h, h));
    x = ag::add(x, mlp.forward(ln2.forward(x)));
    return x;
  }
};

template <class T>
struct Encoder {
  EncoderConfig cfg;
  nn::LinearLayer<T> patch;
  nn::Var<T> pos;
  std::vector<EncBlock<T>> blocks;
  mutable int64_t encode_calls = 0;

  Encoder(nn::ParamStore<T>& ps, const EncoderConfig& cfg_, Pcg32& rng) : cfg(cfg_) {
    cfg.validate();
    patch = nn::LinearLayer<T>(ps, "enc.patch", kPatchH * kPatchW, cfg.d, rng);
    pos = ps.add("enc.pos",
                 nn::trunc_normal_init<T>({cfg.tokens(), cfg.d}, 0.0, nn::kEmbedStd, rng));
    for (int i = 0; i < cfg.depth; ++i)
      blocks.emplace_back(ps, "enc.block" + std::to_string(i), cfg.d, cfg.heads, cfg.mlp_ratio,
                          rng);
  }

  nn::Var<T> encode(const Tensor<T>& images) const {
    ++encode_calls;
    auto x = ag::linear(ag::constant(patchify(images, cfg)), patch.w, patch.b);
    x = ag::add_rows(x, pos);
    for (const auto& b : blocks) x = b.forward(x);
    return x;
  }
};

}  // namespace cppd
