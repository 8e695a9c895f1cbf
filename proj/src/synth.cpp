#include "cppd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cppd/pgm.hpp"

namespace fs = std::filesystem;

namespace cppd {

namespace {

std::vector<uint8_t> make_glyph(uint64_t seed, int symbol_index, int glyph_h, int glyph_w) {
  // Random bits at half resolution upsampled 2x2: stroke-like blocks that
  // survive the small shifts introduced by rotation and blur.
  Pcg32 rng(seed, 0x67'6c'79'70'68ULL + static_cast<uint64_t>(symbol_index));
  int bh = (glyph_h + 1) / 2, bw = (glyph_w + 1) / 2;
  std::vector<uint8_t> blocks(static_cast<size_t>(bh) * bw);
  for (auto& b : blocks) b = rng.next_double() < 0.5 ? 1 : 0;
  std::vector<uint8_t> bits(static_cast<size_t>(glyph_h) * glyph_w);
  for (int y = 0; y < glyph_h; ++y)
    for (int x = 0; x < glyph_w; ++x)
      bits[static_cast<size_t>(y) * glyph_w + x] =
          blocks[static_cast<size_t>(y / 2) * bw + x / 2];
  return bits;
}

}  // namespace

GlyphAtlas build_atlas(const CharSet& charset, int glyph_h, int glyph_w, uint64_t atlas_seed) {
  if (glyph_h < 3 || glyph_w < 3) throw std::invalid_argument("atlas: glyphs must be >= 3x3");
  constexpr int kMaxRetries = 64;
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    uint64_t seed = atlas_seed + static_cast<uint64_t>(attempt);
    GlyphAtlas atlas{glyph_h, glyph_w, seed, {}};
    atlas.bitmaps.reserve(static_cast<size_t>(charset.size()));
    for (int s = 0; s < charset.size(); ++s)
      atlas.bitmaps.push_back(make_glyph(seed, s, glyph_h, glyph_w));
    bool collision = false;
    for (size_t i = 0; i < atlas.bitmaps.size() && !collision; ++i)
      for (size_t j = i + 1; j < atlas.bitmaps.size(); ++j)
        if (atlas.bitmaps[i] == atlas.bitmaps[j]) {
          collision = true;
          break;
        }
    if (!collision) return atlas;
  }
  throw std::runtime_error("atlas: could not find a collision-free seed");
}

Image render(std::string_view text, const GlyphAtlas& atlas, int h, int w,
             const CharSet& charset, int spacing) {
  Image image({h, w});
  if (text.empty()) return image;
  int n = static_cast<int>(text.size());
  int text_w = n * atlas.glyph_w + (n - 1) * spacing;
  if (text_w > w)
    throw std::invalid_argument("render: text of width " + std::to_string(text_w) +
                                " px does not fit W=" + std::to_string(w));
  if (atlas.glyph_h > h) throw std::invalid_argument("render: glyph taller than image");
  int y0 = (h - atlas.glyph_h) / 2;
  int x = 0;
  for (char c : text) {
    const auto& bits = atlas.bitmaps[static_cast<size_t>(charset.id_of(c))];
    for (int gy = 0; gy < atlas.glyph_h; ++gy)
      for (int gx = 0; gx < atlas.glyph_w; ++gx)
        if (bits[static_cast<size_t>(gy) * atlas.glyph_w + gx])
          image.at({y0 + gy, x + gx}) = 1.0f;
    x += atlas.glyph_w + spacing;
  }
  return image;
}

namespace {

Image rotate(const Image& src, double deg) {
  int h = src.dim(0), w = src.dim(1);
  Image dst({h, w});
  double rad = deg * M_PI / 180.0;
  double cs = std::cos(rad), sn = std::sin(rad);
  double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // inverse map with bilinear sampling; outside pixels are background
      double dy = y - cy, dx = x - cx;
      double sy = cs * dy + sn * dx + cy;
      double sx = -sn * dy + cs * dx + cx;
      int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      double fy = sy - y0, fx = sx - x0;
      double acc = 0.0;
      for (int oy = 0; oy <= 1; ++oy)
        for (int ox = 0; ox <= 1; ++ox) {
          int yy = y0 + oy, xx = x0 + ox;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          double wgt = (oy ? fy : 1.0 - fy) * (ox ? fx : 1.0 - fx);
          acc += wgt * src.at({yy, xx});
        }
      dst.at({y, x}) = static_cast<float>(acc);
    }
  }
  return dst;
}

Image box_blur_1d(const Image& src) {
  // horizontal 3-tap box; a cheap stand-in for motion blur
  int h = src.dim(0), w = src.dim(1);
  Image dst({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      int cnt = 0;
      for (int ox = -1; ox <= 1; ++ox) {
        int xx = x + ox;
        if (xx < 0 || xx >= w) continue;
        acc += src.at({y, xx});
        ++cnt;
      }
      dst.at({y, x}) = acc / static_cast<float>(cnt);
    }
  return dst;
}

}  // namespace

Image augment(const Image& image, const AugmentParams& params, Pcg32& rng) {
  Image out = image;
  if (rng.next_double() < params.rot_prob) {
    double deg = (rng.next_double() * 2.0 - 1.0) * params.rot_deg;
    out = rotate(out, deg);
  }
  if (rng.next_double() < params.blur_prob) out = box_blur_1d(out);
  if (rng.next_double() < params.noise_prob) {
    for (int64_t i = 0; i < out.numel(); ++i)
      out[i] += static_cast<float>(rng.normal() * params.noise_sigma);
  }
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(out[i], 0.0f, 1.0f);
  return out;
}

SampleRecord make_sample(const DatasetSpec& spec, const GlyphAtlas& atlas,
                         const CharSet& charset, int index) {
  Pcg32 rng(spec.seed, 0x73'61'6dULL * 0x10000 + static_cast<uint64_t>(index));
  int span = spec.len_max - spec.len_min + 1;
  int len = spec.len_min + static_cast<int>(rng.next_below(static_cast<uint32_t>(span)));
  std::string text;
  for (int i = 0; i < len; ++i)
    text.push_back(charset.symbol(static_cast<int>(rng.next_below(
        static_cast<uint32_t>(charset.size())))));
  SampleRecord rec;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%06d", index);
  rec.id = buf;
  rec.text = text;
  rec.image = render(text, atlas, spec.h, spec.w, charset, spec.spacing);
  if (spec.augment) rec.image = augment(rec.image, spec.aug, rng);
  return rec;
}

std::string generate_dataset(const DatasetSpec& spec, const CharSet& charset,
                             const std::string& out_dir) {
  if (spec.len_min < 0 || spec.len_min > spec.len_max)
    throw std::invalid_argument("dataset: bad length range");
  fs::create_directories(fs::path(out_dir) / "images");
  GlyphAtlas atlas = build_atlas(charset, spec.glyph_h, spec.glyph_w, spec.atlas_seed);
  charset.save((fs::path(out_dir) / "charset.txt").string());

  std::string manifest_path = (fs::path(out_dir) / "manifest.tsv").string();
  std::string tmp = manifest_path + ".tmp";
  {
    std::ofstream manifest(tmp, std::ios::trunc);
    if (!manifest) throw std::runtime_error("dataset: cannot write " + tmp);
    for (int i = 0; i < spec.n; ++i) {
      SampleRecord rec = make_sample(spec, atlas, charset, i);
      write_pgm((fs::path(out_dir) / "images" / (rec.id + ".pgm")).string(), rec.image);
      manifest << rec.id << '\t' << rec.text << '\n';
    }
  }
  if (std::rename(tmp.c_str(), manifest_path.c_str()) != 0)
    throw std::runtime_error("dataset: rename failed for " + manifest_path);
  return manifest_path;
}

Dataset load_dataset(const std::string& dir) {
  std::string manifest_path = (fs::path(dir) / "manifest.tsv").string();
  std::ifstream manifest(manifest_path);
  if (!manifest) throw std::runtime_error("dataset: cannot open " + manifest_path);
  Dataset ds{CharSet::from_file((fs::path(dir) / "charset.txt").string()), {}, 0, 0};
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("dataset: malformed manifest line: " + line);
    SampleRecord rec;
    rec.id = line.substr(0, tab);
    rec.text = line.substr(tab + 1);
    for (char c : rec.text) ds.charset.id_of(c);  // label/charset mismatch check
    std::string img_path = (fs::path(dir) / "images" / (rec.id + ".pgm")).string();
    if (!fs::exists(img_path))
      throw std::runtime_error("dataset: missing image for sample '" + rec.id + "'");
    rec.image = read_pgm(img_path);
    if (ds.h == 0) {
      ds.h = rec.image.dim(0);
      ds.w = rec.image.dim(1);
    } else if (rec.image.dim(0) != ds.h || rec.image.dim(1) != ds.w) {
      throw std::runtime_error("dataset: inconsistent image size for '" + rec.id + "'");
    }
    ds.samples.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace cppd
