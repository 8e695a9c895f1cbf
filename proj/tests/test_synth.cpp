#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cppd/pgm.hpp"
#include "cppd/synth.hpp"

using namespace cppd;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("cppd_synth_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("atlas determinism and distinctness") {
  CharSet cs2("ab");
  GlyphAtlas a = build_atlas(cs2, 7, 5, 7);
  GlyphAtlas b = build_atlas(cs2, 7, 5, 7);
  CHECK(a.bitmaps == b.bitmaps);

  CharSet cs16("abcdefghijklmnop");
  GlyphAtlas big = build_atlas(cs16, 7, 5, 3);
  for (size_t i = 0; i < big.bitmaps.size(); ++i)
    for (size_t j = i + 1; j < big.bitmaps.size(); ++j) CHECK(big.bitmaps[i] != big.bitmaps[j]);

  CharSet cs1("a");
  CHECK(build_atlas(cs1, 3, 3, 0).bitmaps.size() == 1);

  CHECK_THROWS_AS(build_atlas(cs2, 2, 5, 0), std::invalid_argument);
}

TEST_CASE("render basics") {
  CharSet cs("ab");
  GlyphAtlas atlas = build_atlas(cs, 8, 6, 11);

  Image empty = render("", atlas, 32, 40, cs, 2);
  for (int64_t i = 0; i < empty.numel(); ++i) CHECK(empty[i] == 0.0f);

  Image a1 = render("a", atlas, 32, 40, cs, 2);
  Image a2 = render("a", atlas, 32, 40, cs, 2);
  CHECK(a1.vec() == a2.vec());

  // pixel-diff oracle: distinct glyphs imply "ab" != "ba"
  Image ab = render("ab", atlas, 32, 40, cs, 2);
  Image ba = render("ba", atlas, 32, 40, cs, 2);
  int diff = 0;
  for (int64_t i = 0; i < ab.numel(); ++i) diff += ab[i] != ba[i];
  CHECK(diff > 0);

  CHECK_THROWS_AS(render("aaaaaaaa", atlas, 32, 40, cs, 2), std::invalid_argument);
}

TEST_CASE("augment behavior") {
  CharSet cs("ab");
  GlyphAtlas atlas = build_atlas(cs, 8, 6, 11);
  Image base = render("ab", atlas, 32, 40, cs, 2);

  AugmentParams off;  // all probabilities zero
  Pcg32 rng(5, 1);
  CHECK(augment(base, off, rng).vec() == base.vec());

  AugmentParams all{1.0, 5.0, 1.0, 1.0, 0.05};
  Pcg32 r1(9, 2), r2(9, 2);
  CHECK(augment(base, all, r1).vec() == augment(base, all, r2).vec());

  // statistical oracle: noise-only sigma=0.05 
  AugmentParams noise{0.0, 0.0, 0.0, 1.0, 0.05};
  Pcg32 rn(13, 3);
  double mean_delta = 0.0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    Image out = augment(base, noise, rn);
    double acc = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) acc += std::abs(out[i] - base[i]);
    mean_delta += acc / static_cast<double>(out.numel());
  }
  mean_delta /= trials;
  CHECK(mean_delta > 0.0);
  CHECK(mean_delta < 0.1);
}

TEST_CASE("pgm round trip and scaling") {
  fs::path dir = fresh_dir("pgm");
  Image img({4, 6});
  img.at({0, 0}) = 1.0f;
  img.at({3, 5}) = 0.5f;
  img.at({2, 2}) = 0.123f;
  write_pgm((dir / "x.pgm").string(), img);
  Image back = read_pgm((dir / "x.pgm").string());
  REQUIRE(back.shape() == img.shape());
  CHECK(back.at({0, 0}) == 1.0f);  // byte 255 reads back as exactly 1.0
  for (int64_t i = 0; i < img.numel(); ++i) {
    float quant = std::round(img[i] * 255.0f) / 255.0f;
    CHECK(back[i] == doctest::Approx(quant).epsilon(1e-6));
  }
}

TEST_CASE("dataset generation, reproducibility, loading") {
  CharSet cs("abcdefgh");
  DatasetSpec spec;
  spec.n = 30;
  spec.len_min = 1;
  spec.len_max = 4;
  spec.h = 32;
  spec.w = 64;
  spec.seed = 3;

  fs::path d1 = fresh_dir("gen1");
  fs::path d2 = fresh_dir("gen2");
  generate_dataset(spec, cs, d1.string());
  generate_dataset(spec, cs, d2.string());

  // full determinism: byte-identical manifests and images
  CHECK(slurp(d1 / "manifest.tsv") == slurp(d2 / "manifest.tsv"));
  for (int i = 0; i < spec.n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "s%06d.pgm", i);
    CHECK(slurp(d1 / "images" / name) == slurp(d2 / "images" / name));
  }

  // sample i regenerated in isolation is byte-identical
  GlyphAtlas atlas = build_atlas(cs, spec.glyph_h, spec.glyph_w, spec.atlas_seed);
  SampleRecord rec = make_sample(spec, atlas, cs, 17);
  fs::path lone = fresh_dir("lone");
  write_pgm((lone / "r.pgm").string(), rec.image);
  CHECK(slurp(lone / "r.pgm") == slurp(d1 / "images" / "s000017.pgm"));

  // save -> load round trip
  Dataset ds = load_dataset(d1.string());
  REQUIRE(ds.samples.size() == 30);
  CHECK(ds.charset == cs);
  CHECK(ds.h == 32);
  CHECK(ds.w == 64);
  CHECK(ds.samples[17].text == rec.text);
  for (int64_t i = 0; i < rec.image.numel(); ++i) {
    float quant = std::round(rec.image[i] * 255.0f) / 255.0f;
    CHECK(ds.samples[17].image[i] == doctest::Approx(quant).epsilon(1e-6));
  }
}

TEST_CASE("empty dataset is valid") {
  CharSet cs("ab");
  DatasetSpec spec;
  spec.n = 0;
  fs::path d = fresh_dir("empty");
  std::string manifest = generate_dataset(spec, cs, d.string());
  CHECK(fs::exists(manifest));
  Dataset ds = load_dataset(d.string());
  CHECK(ds.samples.empty());
}

TEST_CASE("loader errors name the sample") {
  CharSet cs("ab");
  DatasetSpec spec;
  spec.n = 3;
  spec.len_min = 1;
  spec.len_max = 2;
  spec.h = 32;
  spec.w = 32;
  fs::path d = fresh_dir("missing");
  generate_dataset(spec, cs, d.string());
  fs::remove(d / "images" / "s000001.pgm");
  CHECK_THROWS_WITH_AS(load_dataset(d.string()),
                       "dataset: missing image for sample 's000001'", std::runtime_error);
}

TEST_CASE("length distribution of generated texts") {
  CharSet cs("abcdefghijklmnop");
  DatasetSpec spec;
  spec.n = 1000;
  spec.len_min = 1;
  spec.len_max = 8;
  spec.h = 32;
  spec.w = 100;
  spec.seed = 9;
  GlyphAtlas atlas = build_atlas(cs, spec.glyph_h, spec.glyph_w, spec.atlas_seed);
  double mean = 0.0;
  for (int i = 0; i < spec.n; ++i) mean += static_cast<double>(make_sample(spec, atlas, cs, i).text.size());
  mean /= spec.n;
  CHECK(mean == doctest::Approx(4.5).epsilon(0.3 / 4.5));
}
