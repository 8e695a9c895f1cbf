#include "cppd/attn_dump.hpp"

#include <filesystem>

#include "cppd/pgm.hpp"

namespace fs = std::filesystem;

namespace cppd {

namespace {

Tensor<float> normalize_map(const std::vector<float>& v, int h, int w) {
  float lo = v[0], hi = v[0];
  for (float x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  float range = hi - lo;
  Tensor<float> img({h, w});
  for (size_t i = 0; i < v.size(); ++i)
    img[static_cast<int64_t>(i)] = range > 1e-12f ? (v[i] - lo) / range : 0.0f;
  return img;
}

}  // namespace

int dump_attention(const CppdModel<float>& model, const Image& image,
                   const std::string& out_dir) {
  ag::NoGrad guard;
  fs::create_directories(out_dir);
  const EncoderConfig& ec = model.enc().cfg;
  if (image.dim(0) != ec.h || image.dim(1) != ec.w)
    throw std::invalid_argument("dump-attn: image size does not match the model");
  Tensor<float> batch({1, ec.h, ec.w});
  std::copy(image.data(), image.data() + image.numel(), batch.data());
  auto out = model.forward(batch);

  int tv = ec.tokens();
  int grid_h = ec.h / kPatchH, grid_w = ec.w / kPatchW;
  int files = 0;
  for (const auto& rec : out.attn) {
    int heads = rec.weights.dim(1);
    int tq = rec.weights.dim(2);
    int tk = rec.weights.dim(3);
    // cc/co blocks attend over [visual; embed]; queries of interest are the
    // embedding rows. The fuse branch queries are the L ordering slots.
    int q0 = rec.branch == "fuse" ? 0 : tv;
    if (tk < tv) throw std::logic_error("dump-attn: unexpected key count");
    for (int h = 0; h < heads; ++h)
      for (int q = q0; q < tq; ++q) {
        std::vector<float> vis(static_cast<size_t>(tv));
        const float* row =
            rec.weights.data() + ((static_cast<int64_t>(h) * tq) + q) * tk;
        for (int j = 0; j < tv; ++j) vis[static_cast<size_t>(j)] = row[j];
        char name[96];
        std::snprintf(name, sizeof(name), "attn_%s_L%d_H%d_Q%d.pgm", rec.branch.c_str(),
                      rec.layer, h, q - q0);
        write_pgm((fs::path(out_dir) / name).string(), normalize_map(vis, grid_h, grid_w));
        ++files;
      }
  }
  return files;
}

}  // namespace cppd
