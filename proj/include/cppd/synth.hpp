#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cppd/charset.hpp"
#include "cppd/rng.hpp"
#include "cppd/tensor.hpp"

namespace cppd {

using Image = Tensor<float>;  // (H, W), values in [0, 1]

/// Procedural per-symbol glyph bitmaps. Bitmaps depend only on
/// (atlas_seed, symbol_index); a colliding seed is bumped until all glyphs
/// are pairwise distinct.
struct GlyphAtlas {
  int glyph_h = 0;
  int glyph_w = 0;
  uint64_t seed = 0;  // the seed that produced a collision-free atlas
  std::vector<std::vector<uint8_t>> bitmaps;  // S entries of glyph_h*glyph_w
};

GlyphAtlas build_atlas(const CharSet& charset, int glyph_h, int glyph_w, uint64_t atlas_seed);

struct AugmentParams {
  double rot_prob = 0.0;
  double rot_deg = 5.0;  // max |angle|
  double blur_prob = 0.0;
  double noise_prob = 0.0;
  double noise_sigma = 0.05;
};

/// Glyphs left-to-right with fixed spacing, vertically centered; background
/// 0, ink 1. Throws if the text does not fit the target width.
Image render(std::string_view text, const GlyphAtlas& atlas, int h, int w,
             const CharSet& charset, int spacing);

/// Random subset of {rotation, 1D box blur, gaussian noise}, clamped to
/// [0,1]; a pure function of (image, params, rng state).
Image augment(const Image& image, const AugmentParams& params, Pcg32& rng);

struct SampleRecord {
  std::string id;
  std::string text;
  Image image;
};

struct DatasetSpec {
  int n = 0;
  int len_min = 1;
  int len_max = 8;
  int h = 32;
  int w = 100;
  uint64_t seed = 0;        // sample stream (texts, augmentation)
  uint64_t atlas_seed = 0;  // glyph shapes; splits of one corpus share it
  bool augment = false;
  AugmentParams aug;
  int glyph_h = 16;
  int glyph_w = 8;
  int spacing = 2;
};

/// Sample index i as a pure function of (spec, atlas, i): the text, the
/// rendered image, and any augmentation draw from stream i of spec.seed.
SampleRecord make_sample(const DatasetSpec& spec, const GlyphAtlas& atlas,
                         const CharSet& charset, int index);

/// Writes manifest.tsv, charset.txt and images/<id>.pgm; returns the
/// manifest path.
std::string generate_dataset(const DatasetSpec& spec, const CharSet& charset,
                             const std::string& out_dir);

struct Dataset {
  CharSet charset;
  std::vector<SampleRecord> samples;
  int h = 0;
  int w = 0;
};

Dataset load_dataset(const std::string& dir);

}  // namespace cppd
