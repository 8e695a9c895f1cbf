#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "cppd/losses.hpp"
#include "cppd/variants.hpp"
#include "oracles.hpp"

using namespace cppd;
using D = double;

namespace {

Tensor<D> rand_images(int b, int h, int w, Pcg32& rng) {
  Tensor<D> t({b, h, w});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.next_double();
  return t;
}

const VariantConfig kTiny{5, 6, 8, 2, 2, 2};
const EncoderConfig kTinyEnc{32, 16, 8, 1, 2, 2};

// rec-label slots for "texts" over ids 0..S-1
std::vector<int> slots_of(const std::vector<int>& chars, int s, int l) {
  std::vector<int> slots(static_cast<size_t>(l), s + 1);
  for (size_t i = 0; i < chars.size(); ++i) slots[i] = chars[i];
  slots[chars.size()] = s;
  return slots;
}

double max_abs_diff(const Tensor<D>& a, const Tensor<D>& b) {
  REQUIRE(a.numel() == b.numel());
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<int> canonical_perm(int n) {
  std::vector<int> p(static_cast<size_t>(n));
  std::iota(p.begin(), p.end(), 1);
  return p;
}

}  // namespace

TEST_CASE("variant parsing is exhaustive") {
  for (const char* name : {"ar", "ar-p", "ar-l", "ar-l-p", "pd", "pd-p", "cppd"})
    CHECK(variant_name(parse_variant(name)) == std::string(name));
  CHECK_THROWS_AS(parse_variant("ctc"), std::invalid_argument);
}

TEST_CASE("permutation sampling") {
  Pcg32 rng(1, 0);
  CHECK(sample_permutation(1, rng) == std::vector<int>{1});
  CHECK(uniform_permutation(1, rng) == std::vector<int>{1});

  // always a bijection on {1..T}
  for (int trial = 0; trial < 50; ++trial) {
    int t = 1 + static_cast<int>(rng.next_below(7));
    auto p = sample_permutation(t, rng);
    auto q = p;
    std::sort(q.begin(), q.end());
    CHECK(q == canonical_perm(t));
  }

  // the uniform branch covers all 6 orders of T=3 within +-10% of uniform
  std::map<std::vector<int>, int> freq;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) freq[uniform_permutation(3, rng)]++;
  CHECK(freq.size() == 6);
  for (const auto& [perm, count] : freq)
    CHECK(std::abs(count / static_cast<double>(draws) - 1.0 / 6) < 0.1 / 6);

  // the mixture includes the canonical order about half the time
  int canonical = 0;
  for (int i = 0; i < draws; ++i)
    if (sample_permutation(3, rng) == canonical_perm(3)) ++canonical;
  double rate = canonical / static_cast<double>(draws);
  CHECK(rate > 0.5);         // 0.5 + 0.5/6 expected
  CHECK(rate < 0.5 + 0.25);
}

TEST_CASE("ar causal mask: future labels cannot move past logits") {
  ArModel<D> model(VariantKind::AR, kTiny, kTinyEnc, 11);
  Pcg32 rng(2, 0);
  Tensor<D> img = rand_images(1, 32, 16, rng);
  std::vector<int> chars = {0, 3, 1, 2};  // N=4
  auto slots = slots_of(chars, kTiny.s, kTiny.l);
  auto perms = std::vector<std::vector<int>>{canonical_perm(4)};
  auto base = model.train_forward(img, slots, perms);

  for (int q = 1; q < kTiny.l; ++q) {  // perturb label at slot q (1-based q+1)
    auto bumped = slots;
    bumped[static_cast<size_t>(q)] = (slots[static_cast<size_t>(q)] + 1) % kTiny.s;
    auto out = model.train_forward(img, bumped, perms);
    // steps t <= q (0-based rows t-1 < q) must be bitwise unchanged
    for (int t = 0; t < q; ++t)
      for (int c = 0; c < kTiny.vocab(); ++c)
        CHECK(out->val.at({0, t, c}) == base->val.at({0, t, c}));
  }
}

TEST_CASE("ar-l context restriction: step t sees only label t-1") {
  ArModel<D> model(VariantKind::AR_L, kTiny, kTinyEnc, 12);
  Pcg32 rng(3, 0);
  Tensor<D> img = rand_images(1, 32, 16, rng);
  std::vector<int> chars = {2, 0, 4, 1};
  auto slots = slots_of(chars, kTiny.s, kTiny.l);
  auto perms = std::vector<std::vector<int>>{canonical_perm(4)};
  auto base = model.train_forward(img, slots, perms);

  for (int p = 0; p < 4; ++p) {  // perturb character p (slot p+1, 1-based)
    auto bumped = slots;
    bumped[static_cast<size_t>(p)] = (slots[static_cast<size_t>(p)] + 1) % kTiny.s;
    auto out = model.train_forward(img, bumped, perms);
    for (int t = 0; t < kTiny.l; ++t) {
      bool depends = t == p + 1;  // only step p+2's query carries label p+1... row index t = slot-1
      double delta = 0.0;
      for (int c = 0; c < kTiny.vocab(); ++c)
        delta = std::max(delta, std::abs(out->val.at({0, t, c}) - base->val.at({0, t, c})));
      if (depends)
        CHECK(delta > 0.0);
      else
        CHECK(delta == 0.0);
    }
  }
}

TEST_CASE("ar-p with a singleton permutation equals ar") {
  ArModel<D> ar(VariantKind::AR, kTiny, kTinyEnc, 13);
  ArModel<D> arp(VariantKind::AR_P, kTiny, kTinyEnc, 13);
  Pcg32 rng(4, 0);
  Tensor<D> img = rand_images(1, 32, 16, rng);
  std::vector<int> chars = {3};
  auto slots = slots_of(chars, kTiny.s, kTiny.l);
  auto perms = std::vector<std::vector<int>>{{1}};
  auto a = ar.train_forward(img, slots, perms);
  auto b = arp.train_forward(img, slots, perms);
  CHECK(max_abs_diff(a->val, b->val) == 0.0);  // same seed, same params, same mask
}

TEST_CASE("ar-l and ar with a single character depend on the same labels") {
  // With T=1 both kinds may only use BOS for step 1 and y_1 for the EOS step.
  Pcg32 rng(5, 0);
  Tensor<D> img = rand_images(1, 32, 16, rng);
  std::vector<int> chars = {2};
  auto slots = slots_of(chars, kTiny.s, kTiny.l);
  auto perms = std::vector<std::vector<int>>{{1}};
  for (VariantKind kind : {VariantKind::AR, VariantKind::AR_L}) {
    ArModel<D> model(kind, kTiny, kTinyEnc, 14);
    auto base = model.train_forward(img, slots, perms);
    auto bumped = slots;
    bumped[0] = (slots[0] + 1) % kTiny.s;
    auto out = model.train_forward(img, bumped, perms);
    // step 1 (row 0) never moves; step 2 (row 1, EOS step) must move
    double d0 = 0.0, d1 = 0.0;
    for (int c = 0; c < kTiny.vocab(); ++c) {
      d0 = std::max(d0, std::abs(out->val.at({0, 0, c}) - base->val.at({0, 0, c})));
      d1 = std::max(d1, std::abs(out->val.at({0, 1, c}) - base->val.at({0, 1, c})));
    }
    CHECK(d0 == 0.0);
    CHECK(d1 > 0.0);
  }
}

TEST_CASE("ar batched teacher forcing matches the unbatched naive oracle") {
  Pcg32 rng(6, 0);
  for (VariantKind kind :
       {VariantKind::AR, VariantKind::AR_P, VariantKind::AR_L, VariantKind::AR_L_P}) {
    ArModel<D> model(kind, kTiny, kTinyEnc, 15);
    Tensor<D> img = rand_images(2, 32, 16, rng);
    std::vector<std::vector<int>> chars = {{0, 3, 1}, {4, 2}};
    std::vector<std::vector<int>> perms;
    if (is_permuted(kind)) {
      perms = {{2, 1, 3}, {2, 1}};
    } else {
      perms = {canonical_perm(3), canonical_perm(2)};
    }
    std::vector<int> slots;
    for (const auto& c : chars) {
      auto s = slots_of(c, kTiny.s, kTiny.l);
      slots.insert(slots.end(), s.begin(), s.end());
    }
    auto batched = model.train_forward(img, slots, perms);

    for (int b = 0; b < 2; ++b) {
      Tensor<D> one({1, 32, 16});
      std::copy(img.data() + static_cast<int64_t>(b) * 32 * 16,
                img.data() + static_cast<int64_t>(b + 1) * 32 * 16, one.data());
      ag::NoGrad guard;
      auto f_v = model.enc().encode(one);
      oracle::DT f_v2({f_v->val.dim(1), f_v->val.dim(2)});
      std::copy(f_v->val.data(), f_v->val.data() + f_v->val.numel(), f_v2.data());
      std::vector<int> lab(slots.begin() + b * kTiny.l, slots.begin() + (b + 1) * kTiny.l);
      oracle::DT want = oracle::ar_teacher_forced(model, f_v2, lab, perms[static_cast<size_t>(b)]);
      for (int t = 0; t < kTiny.l; ++t)
        for (int c = 0; c < kTiny.vocab(); ++c)
          CHECK(batched->val.at({b, t, c}) ==
                doctest::Approx(want.at({t, c})).epsilon(1e-5));
    }
  }
}

TEST_CASE("ar greedy decode basics") {
  ArModel<D> model(VariantKind::AR, kTiny, kTinyEnc, 16);
  Pcg32 rng(7, 0);
  Tensor<D> img = rand_images(1, 32, 16, rng);

  // a model whose logits always argmax EOS decodes the empty string
  for (auto& [name, var] : model.store.items)
    if (name == "ar.head.b") {
      var->val.fill(0.0);
      var->val[kTiny.s] = 50.0;
    } else if (name == "ar.head.w") {
      var->val.fill(0.0);
    }
  CHECK(model.greedy_decode(img).empty());

  // determinism
  ArModel<D> m2(VariantKind::AR_L, kTiny, kTinyEnc, 17);
  auto a = m2.greedy_decode(img);
  auto b = m2.greedy_decode(img);
  CHECK(a == b);
}

TEST_CASE("ar greedy decode is self-consistent under teacher forcing") {
  Pcg32 rng(8, 0);
  for (VariantKind kind : {VariantKind::AR, VariantKind::AR_L}) {
    ArModel<D> model(kind, kTiny, kTinyEnc, 18);
    Tensor<D> img = rand_images(1, 32, 16, rng);
    auto emitted = model.greedy_decode(img);
    if (static_cast<int>(emitted.size()) >= kTiny.l) continue;  // no EOS emitted
    auto slots = slots_of(emitted, kTiny.s, kTiny.l);
    auto perms = std::vector<std::vector<int>>{canonical_perm(static_cast<int>(emitted.size()))};
    auto logits = model.train_forward(img, slots, perms);
    for (size_t t = 0; t <= emitted.size(); ++t) {
      int best = 0;
      for (int c = 1; c < kTiny.vocab(); ++c)
        if (logits->val.at({0, static_cast<int>(t), c}) >
            logits->val.at({0, static_cast<int>(t), best}))
          best = c;
      int want = t < emitted.size() ? emitted[t] : kTiny.s;
      CHECK(best == want);
    }
  }
}

TEST_CASE("pd forward: one pass, shape, naive block oracle") {
  PdModel<D> model(VariantKind::PD, kTiny, kTinyEnc, 19);
  Pcg32 rng(9, 0);
  Tensor<D> img = rand_images(1, 32, 16, rng);
  int64_t before_enc = model.enc().encode_calls;
  auto out = model.forward(img);
  CHECK(model.decode_passes == 1);
  CHECK(model.enc().encode_calls == before_enc + 1);
  CHECK(out.rec_logits->val.shape() == std::vector<int>{1, kTiny.l, kTiny.vocab()});
  CHECK(out.side_logits == nullptr);

  // reference: chained naive pd blocks + head
  ag::NoGrad guard;
  auto f_v = model.enc().encode(img);
  oracle::DT fv2({f_v->val.dim(1), f_v->val.dim(2)});
  std::copy(f_v->val.data(), f_v->val.data() + f_v->val.numel(), fv2.data());
  // naive evaluation rebuilt from the registered parameters
  oracle::DT q = model.pos_q->val;
  auto P = [&](const std::string& nm) { return model.store.find(nm)->val; };
  for (int i = 0; i < 2; ++i) {
    std::string p = "pd.block" + std::to_string(i);
    oracle::DT h = oracle::layer_norm(q, P(p + ".ln1.gamma"), P(p + ".ln1.beta"));
    oracle::DT qq = oracle::linear(h, P(p + ".cross.wq.w"), P(p + ".cross.wq.b"));
    oracle::DT kk = oracle::linear(fv2, P(p + ".cross.wk.w"), P(p + ".cross.wk.b"));
    oracle::DT vv = oracle::linear(fv2, P(p + ".cross.wv.w"), P(p + ".cross.wv.b"));
    oracle::DT o = oracle::sdp_attention(qq, kk, vv, kTiny.heads);
    q = oracle::add(q, oracle::linear(o, P(p + ".cross.wo.w"), P(p + ".cross.wo.b")));
    oracle::DT h2 = oracle::layer_norm(q, P(p + ".ln2.gamma"), P(p + ".ln2.beta"));
    oracle::DT a = oracle::gelu(oracle::linear(h2, P(p + ".mlp.fc1.w"), P(p + ".mlp.fc1.b")));
    q = oracle::add(q, oracle::linear(a, P(p + ".mlp.fc2.w"), P(p + ".mlp.fc2.b")));
  }
  oracle::DT want = oracle::linear(q, P("pd.head.w"), P("pd.head.b"));
  for (int t = 0; t < kTiny.l; ++t)
    for (int c = 0; c < kTiny.vocab(); ++c)
      CHECK(out.rec_logits->val.at({0, t, c}) == doctest::Approx(want.at({t, c})).epsilon(1e-6));
}

TEST_CASE("pd-p side head is train-only and additive") {
  PdModel<D> model(VariantKind::PD_P, kTiny, kTinyEnc, 20);
  Pcg32 rng(10, 0);
  Tensor<D> img = rand_images(1, 32, 16, rng);

  auto with = model.forward(img, nullptr, true);
  auto without = model.forward(img, nullptr, false);
  REQUIRE(with.side_logits != nullptr);
  CHECK(without.side_logits == nullptr);
  CHECK(with.side_logits->val.shape() == with.rec_logits->val.shape());
  // inference output identical whether the side head runs or not
  CHECK(max_abs_diff(with.rec_logits->val, without.rec_logits->val) == 0.0);

  // total train loss is main CE + side CE
  std::vector<int> slots = slots_of({1, 2}, kTiny.s, kTiny.l);
  auto main_l = losses::rec_loss(ag::softmax_last(with.rec_logits), slots);
  auto side_l = losses::rec_loss(ag::softmax_last(with.side_logits), slots);
  auto total = losses::add_scalars(main_l, side_l);
  CHECK(total->val[0] ==
        doctest::Approx(main_l->val[0] + side_l->val[0]).epsilon(1e-12));
}

TEST_CASE("all seven variants consume bitwise-identical visual features") {
  Pcg32 rng(11, 0);
  Tensor<D> img = rand_images(1, 32, 16, rng);
  const uint64_t seed = 99;

  std::vector<Tensor<D>> features;
  auto grab = [&](auto& model) {
    ag::NoGrad guard;
    features.push_back(model.enc().encode(img)->val);
  };

  CppdModel<D> cppd(CppdConfig{kTiny.s, kTiny.l, kTiny.d, 2, kTiny.heads, kTiny.mlp_ratio},
                    kTinyEnc, seed);
  grab(cppd);
  for (VariantKind k :
       {VariantKind::AR, VariantKind::AR_P, VariantKind::AR_L, VariantKind::AR_L_P}) {
    ArModel<D> m(k, kTiny, kTinyEnc, seed);
    grab(m);
  }
  for (VariantKind k : {VariantKind::PD, VariantKind::PD_P}) {
    PdModel<D> m(k, kTiny, kTinyEnc, seed);
    grab(m);
  }
  REQUIRE(features.size() == 7);
  for (size_t i = 1; i < features.size(); ++i) {
    REQUIRE(features[i].numel() == features[0].numel());
    for (int64_t j = 0; j < features[0].numel(); ++j) CHECK(features[i][j] == features[0][j]);
  }
}

TEST_CASE("ar decode pass counter grows with emitted length") {
  ArModel<D> model(VariantKind::AR, kTiny, kTinyEnc, 21);
  Pcg32 rng(12, 0);
  Tensor<D> img = rand_images(1, 32, 16, rng);
  model.decode_passes = 0;
  auto emitted = model.greedy_decode(img);
  CHECK(model.decode_passes >= static_cast<int64_t>(emitted.size()));
  CHECK(model.decode_passes <= kTiny.l);
}
