// Acceptance suite: every shipped guarantee exercised end to end, one
// PASS/FAIL line per criterion. Heavy criteria train real models, so the
// binary takes tens of minutes on a desktop CPU.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cppd/bench.hpp"
#include "cppd/checkpoint.hpp"
#include "cppd/labels.hpp"
#include "cppd/losses.hpp"
#include "cppd/train.hpp"
#include "oracles.hpp"

using namespace cppd;
namespace fs = std::filesystem;
using D = double;

namespace {

fs::path work_root() {
  static fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "cppd_acceptance";
    fs::create_directories(p);
    return p;
  }();
  return root;
}

fs::path fresh_dir(const std::string& tag) {
  fs::path p = work_root() / tag;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void verdict(int criterion, bool pass, const std::string& detail) {
  std::printf("[criterion %d] %s — %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  CHECK_MESSAGE(pass, "criterion ", criterion, ": ", detail);
}

const std::string kDeskCharset = "abcdefghijklmnop";  // S = 16

void gen(const fs::path& dir, int n, uint64_t seed, int len_min, int len_max,
         bool hard = false, int glyph_w = 8, int spacing = 2) {
  DatasetSpec spec;
  spec.n = n;
  spec.len_min = len_min;
  spec.len_max = len_max;
  spec.h = 32;
  spec.w = 100;
  spec.seed = seed;
  spec.atlas_seed = 7;
  spec.glyph_w = glyph_w;
  spec.spacing = spacing;
  if (hard) {
    spec.augment = true;
    spec.aug = AugmentParams{0.7, 5.0, 0.7, 0.7, 0.08};
  }
  generate_dataset(spec, CharSet(kDeskCharset), dir.string());
}

Tensor<D> rand_images(int b, int h, int w, Pcg32& rng) {
  Tensor<D> t({b, h, w});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.next_double();
  return t;
}

Tensor<D> rand_prob_rows(std::vector<int> shape, Pcg32& rng) {
  Tensor<D> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  auto [rows, d] = ag::as_rows(t.shape());
  ag::softmax_rows_inplace(t.data(), rows, d);
  return t;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("criterion 1: label constructions") {
  CharSet alnum = CharSet::alnum36();
  bool pass = true;

  CCLabel cc = encode_cc("arteta", alnum, 25);
  for (int c = 0; c < 36; ++c) {
    char sym = alnum.symbol(c);
    int want = sym == 'a' ? 2 : sym == 't' ? 2 : sym == 'e' ? 1 : sym == 'r' ? 1 : 0;
    pass = pass && cc.counts[static_cast<size_t>(c)] == want;
  }

  COLabel co = encode_co("arteta", 25);
  for (int i = 0; i < 25; ++i) pass = pass && co.mask[static_cast<size_t>(i)] == (i < 6 ? 1 : 0);

  RecLabel rec = encode_rec("arteta", alnum, 25);
  std::vector<int> want_rec = {alnum.id_of('a'), alnum.id_of('r'), alnum.id_of('t'),
                               alnum.id_of('e'), alnum.id_of('t'), alnum.id_of('a'),
                               alnum.eos_id()};
  for (int i = 0; i < 25; ++i)
    pass = pass && rec.slots[static_cast<size_t>(i)] ==
                       (i < 7 ? want_rec[static_cast<size_t>(i)] : alnum.pad_id());

  ACETarget ace = encode_ace("arteta", alnum, 25);
  pass = pass && ace.denom == 25 && ace.numer[static_cast<size_t>(alnum.id_of('a'))] == 2 &&
         ace.numer[static_cast<size_t>(alnum.id_of('e'))] == 1 &&
         ace.numer[static_cast<size_t>(alnum.id_of('r'))] == 1 &&
         ace.numer[static_cast<size_t>(alnum.id_of('t'))] == 2 && ace.numer.back() == 19;

  // and through the CLI-facing dump
  pass = pass && format_labels("arteta", alnum, 25) ==
                     "CC a:2 e:1 r:1 t:2\n"
                     "CO 111111 +19x0\n"
                     "REC a r t e t a <eos> <pad>*18\n"
                     "ACE a:2/25 e:1/25 r:1/25 t:2/25 pad:19/25\n";

  verdict(1, pass, "labels 'arteta' reproduce CC/CO/REC/ACE targets exactly");
}

TEST_CASE("criterion 2: loss formulas against naive oracles") {
  Pcg32 rng(2024, 0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    int s = 2 + static_cast<int>(rng.next_below(7));
    int l = 2 + static_cast<int>(rng.next_below(5));
    int v = s + 2;

    Tensor<D> pc = rand_prob_rows({s, l + 1}, rng);
    std::vector<int> counts(static_cast<size_t>(s));
    for (int i = 0; i < s; ++i) counts[static_cast<size_t>(i)] = static_cast<int>(rng.next_below(static_cast<uint32_t>(l + 1)));
    worst = std::max(worst, rel_err(losses::cc_loss(ag::constant(pc), counts)->val[0],
                                    oracle::cc_loss(pc, counts)));

    Tensor<D> pa = rand_prob_rows({l, s + 1}, rng);
    std::vector<double> w(static_cast<size_t>(s) + 1, 0.0);
    int left = l;
    for (int i = 0; i < s && left > 0; ++i) {
      int take = static_cast<int>(rng.next_below(static_cast<uint32_t>(left + 1)));
      w[static_cast<size_t>(i)] = static_cast<double>(take) / l;
      left -= take;
    }
    w[static_cast<size_t>(s)] = static_cast<double>(left) / l;
    Tensor<D> wt({s + 1});
    for (int i = 0; i <= s; ++i) wt[i] = w[static_cast<size_t>(i)];
    worst = std::max(worst, rel_err(losses::ace_loss(ag::constant(pa), ag::constant(wt))->val[0],
                                    oracle::ace_loss(pa, w)));

    Tensor<D> po({l});
    std::vector<double> pv(static_cast<size_t>(l));
    std::vector<uint8_t> y(static_cast<size_t>(l));
    int n = static_cast<int>(rng.next_below(static_cast<uint32_t>(l + 1)));
    for (int i = 0; i < l; ++i) {
      pv[static_cast<size_t>(i)] = rng.next_double();
      po[i] = pv[static_cast<size_t>(i)];
      y[static_cast<size_t>(i)] = i < n ? 1 : 0;
    }
    worst = std::max(worst, rel_err(losses::co_loss(ag::constant(po), y)->val[0],
                                    oracle::co_loss(pv, y)));

    Tensor<D> pr = rand_prob_rows({l, v}, rng);
    std::vector<int> slots(static_cast<size_t>(l));
    for (int i = 0; i < l; ++i) slots[static_cast<size_t>(i)] = static_cast<int>(rng.next_below(static_cast<uint32_t>(v)));
    worst = std::max(worst, rel_err(losses::rec_loss(ag::constant(pr), slots)->val[0],
                                    oracle::rec_loss(pr, slots)));

    int nn_ = static_cast<int>(rng.next_below(static_cast<uint32_t>(l)));
    std::vector<int> ar_slots(static_cast<size_t>(l), s + 1);
    for (int i = 0; i < nn_; ++i) ar_slots[static_cast<size_t>(i)] = static_cast<int>(rng.next_below(static_cast<uint32_t>(s)));
    ar_slots[static_cast<size_t>(nn_)] = s;
    worst = std::max(worst, rel_err(losses::ar_nll(ag::constant(pr), ar_slots, s + 1)->val[0],
                                    oracle::ar_nll(pr, ar_slots, s + 1)));
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "cc/ace/co/rec/ar_nll vs naive double loops, 100 instances, max rel err %.2e",
                worst);
  verdict(2, worst <= 1e-10, detail);
}

TEST_CASE("criterion 3: finite-difference gradient checks") {
  Pcg32 rng(3033, 0);
  double worst_loss = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    int s = 2 + static_cast<int>(rng.next_below(4));
    int l = 2 + static_cast<int>(rng.next_below(4));
    int v = s + 2;
    auto logits = [&](std::vector<int> shape) {
      Tensor<D> t(std::move(shape));
      for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
      return ag::leaf(std::move(t), true);
    };
    {
      std::vector<int> counts(static_cast<size_t>(s));
      for (int i = 0; i < s; ++i) counts[static_cast<size_t>(i)] = static_cast<int>(rng.next_below(static_cast<uint32_t>(l + 1)));
      std::vector<ag::Var<D>> ps = {logits({s, l + 1})};
      worst_loss = std::max(worst_loss, nn::grad_check<D>(
          [&](const std::vector<ag::Var<D>>& p) {
            return losses::cc_loss(ag::softmax_last(p[0]), counts);
          }, ps));
    }
    {
      Tensor<D> wt({s + 1});
      wt[0] = static_cast<double>(l - 1) / l;
      wt[s] = 1.0 / l;
      auto wv = ag::constant(wt);
      std::vector<ag::Var<D>> ps = {logits({l, s + 1})};
      worst_loss = std::max(worst_loss, nn::grad_check<D>(
          [&](const std::vector<ag::Var<D>>& p) {
            return losses::ace_loss(ag::softmax_last(p[0]), wv);
          }, ps));
    }
    {
      std::vector<uint8_t> y(static_cast<size_t>(l));
      for (int i = 0; i < l; ++i) y[static_cast<size_t>(i)] = i < l / 2 ? 1 : 0;
      std::vector<ag::Var<D>> ps = {logits({l})};
      worst_loss = std::max(worst_loss, nn::grad_check<D>(
          [&](const std::vector<ag::Var<D>>& p) {
            return losses::co_loss(ag::sigmoid(p[0]), y);
          }, ps));
    }
    {
      std::vector<int> slots(static_cast<size_t>(l));
      for (int i = 0; i < l; ++i) slots[static_cast<size_t>(i)] = static_cast<int>(rng.next_below(static_cast<uint32_t>(v)));
      std::vector<ag::Var<D>> ps = {logits({l, v})};
      worst_loss = std::max(worst_loss, nn::grad_check<D>(
          [&](const std::vector<ag::Var<D>>& p) {
            return losses::rec_loss(ag::softmax_last(p[0]), slots);
          }, ps));
      std::vector<int> ar_slots(static_cast<size_t>(l), s + 1);
      ar_slots[0] = 0;
      ar_slots[1] = s;
      std::vector<ag::Var<D>> ps2 = {logits({l, v})};
      worst_loss = std::max(worst_loss, nn::grad_check<D>(
          [&](const std::vector<ag::Var<D>>& p) {
            return losses::ar_nll(ag::softmax_last(p[0]), ar_slots, s + 1);
          }, ps2));
    }
  }

  // end-to-end tiny CPPD on 5 random images
  CppdConfig cc{5, 4, 8, 2, 2, 2};
  EncoderConfig ec{32, 16, 8, 1, 2, 2};
  CppdModel<D> model(cc, ec, 77);
  Tensor<D> images = rand_images(5, 32, 16, rng);
  std::vector<int> counts, slots;
  std::vector<uint8_t> mask;
  for (int b = 0; b < 5; ++b) {
    for (int i = 0; i < 5; ++i) counts.push_back(i == b % 5 ? 1 : 0);
    for (int i = 0; i < 4; ++i) mask.push_back(i < 1 ? 1 : 0);
    std::vector<int> sl = {b % 5, 5, 6, 6};
    slots.insert(slots.end(), sl.begin(), sl.end());
  }
  std::vector<ag::Var<D>> params;
  for (auto& [name, var] : model.store.items) params.push_back(var);
  double e2e = nn::grad_check<D>(
      [&](const std::vector<ag::Var<D>>&) {
        auto out = model.forward(images);
        auto lcc = losses::cc_loss(ag::softmax_last(out.cc_logits), counts);
        auto lco = losses::co_loss(ag::sigmoid(out.co_logits), mask);
        auto lrec = losses::rec_loss(ag::softmax_last(out.rec_logits), slots);
        return losses::total_loss(lcc, lco, lrec).total;
      },
      params);

  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "losses max rel err %.2e (tol 1e-5); cppd end-to-end %.2e (tol 1e-4)",
                worst_loss, e2e);
  verdict(3, worst_loss < 1e-5 && e2e < 1e-4, detail);
}

TEST_CASE("criterion 4: structural invariants") {
  Pcg32 rng(4044, 0);
  bool pass = true;
  std::string why;

  // single encoder call per forward + bitwise side-head independence +
  // attention rows
  {
    CppdConfig cc{5, 6, 8, 2, 2, 2};
    EncoderConfig ec{32, 16, 8, 1, 2, 2};
    CppdModel<D> model(cc, ec, 4001);
    Tensor<D> img = rand_images(2, 32, 16, rng);
    int64_t before = model.enc().encode_calls;
    auto out = model.forward(img);
    if (model.enc().encode_calls != before + 1) {
      pass = false;
      why = "encoder called more than once";
    }
    auto bare = model.forward(img, false);
    for (int64_t i = 0; i < out.rec_logits->val.numel(); ++i)
      if (bare.rec_logits->val[i] != out.rec_logits->val[i]) {
        pass = false;
        why = "side heads perturb rec logits";
        break;
      }
    for (const auto& rec : out.attn) {
      int b = rec.weights.dim(0), h = rec.weights.dim(1), tq = rec.weights.dim(2),
          tk = rec.weights.dim(3);
      for (int bi = 0; bi < b && pass; ++bi)
        for (int hi = 0; hi < h && pass; ++hi)
          for (int q = 0; q < tq && pass; ++q) {
            double sum = 0.0;
            for (int k = 0; k < tk; ++k) sum += rec.weights.at({bi, hi, q, k});
            if (std::abs(sum - 1.0) > 1e-5) {
              pass = false;
              why = "attention row sum off";
            }
          }
    }
  }

  // AR causal mask and AR-L context restriction, 20 random cases each
  {
    VariantConfig vc{5, 6, 8, 2, 2, 2};
    EncoderConfig ec{32, 16, 8, 1, 2, 2};
    ArModel<D> ar(VariantKind::AR, vc, ec, 4002);
    ArModel<D> arl(VariantKind::AR_L, vc, ec, 4003);
    for (int trial = 0; trial < 20 && pass; ++trial) {
      Tensor<D> img = rand_images(1, 32, 16, rng);
      int n = 2 + static_cast<int>(rng.next_below(3));
      std::vector<int> chars(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) chars[static_cast<size_t>(i)] = static_cast<int>(rng.next_below(5));
      std::vector<int> slots(static_cast<size_t>(vc.l), vc.s + 1);
      for (int i = 0; i < n; ++i) slots[static_cast<size_t>(i)] = chars[static_cast<size_t>(i)];
      slots[static_cast<size_t>(n)] = vc.s;
      std::vector<int> perm(static_cast<size_t>(n));
      std::iota(perm.begin(), perm.end(), 1);
      std::vector<std::vector<int>> perms = {perm};

      int q = 1 + static_cast<int>(rng.next_below(static_cast<uint32_t>(n)));  // perturb slot q+1 (0-based q)
      auto bumped = slots;
      bumped[static_cast<size_t>(q)] = (slots[static_cast<size_t>(q)] + 1) % vc.s;

      auto base = ar.train_forward(img, slots, perms);
      auto moved = ar.train_forward(img, bumped, perms);
      for (int t = 0; t < q && pass; ++t)
        for (int c = 0; c < vc.vocab(); ++c)
          if (moved->val.at({0, t, c}) != base->val.at({0, t, c})) {
            pass = false;
            why = "AR causal mask leak";
          }

      auto lbase = arl.train_forward(img, slots, perms);
      auto lmoved = arl.train_forward(img, bumped, perms);
      for (int t = 0; t < vc.l && pass; ++t) {
        if (t == q + 1) continue;  // the only step whose query carries slot q+1
        for (int c = 0; c < vc.vocab(); ++c)
          if (lmoved->val.at({0, t, c}) != lbase->val.at({0, t, c})) {
            pass = false;
            why = "AR-L context restriction leak";
          }
      }
    }
  }

  verdict(4, pass, pass ? "encoder-call counter, side-head independence, masks, row sums"
                        : why);
}

// Desk-scale learning world shared by criteria 5 and 8.
namespace {
struct DeskWorld {
  fs::path train_dir, eval_dir;
  DeskWorld() {
    train_dir = fresh_dir("desk_train");
    eval_dir = fresh_dir("desk_eval");
    gen(train_dir, 8000, 101, 1, 8);
    gen(eval_dir, 1000, 202, 1, 8);
  }
};
DeskWorld& desk_world() {
  static DeskWorld w;
  return w;
}

TrainConfig desk_config(VariantKind kind, int epochs, int warmup) {
  TrainConfig cfg;
  cfg.variant = kind;
  cfg.epochs = epochs;
  cfg.warmup_epochs = warmup;
  cfg.batch = 64;
  cfg.lr_scale = 64;  // small-data compensation, recorded in the config dump
  cfg.seed = 7;
  cfg.d = 64;
  cfg.depth = 2;
  cfg.heads = 4;
  cfg.mlp_ratio = 4;
  cfg.l = 12;
  cfg.enc_depth = 2;
  return cfg;
}
}  // namespace

TEST_CASE("criterion 5: desk-scale learning") {
  DeskWorld& world = desk_world();

  TrainResult cppd_run = train(desk_config(VariantKind::CPPD, 14, 3),
                               world.train_dir.string(), world.eval_dir.string(),
                               fresh_dir("desk_cppd").string());
  TrainResult ar_run = train(desk_config(VariantKind::AR, 22, 4), world.train_dir.string(),
                             world.eval_dir.string(), fresh_dir("desk_ar").string());

  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "cppd %.2f%% (need >= 98) in 14 epochs; ar %.2f%% (need >= 95) in 22 epochs",
                100.0 * cppd_run.best_acc, 100.0 * ar_run.best_acc);
  verdict(5, cppd_run.best_acc >= 0.98 && ar_run.best_acc >= 0.95, detail);
}

TEST_CASE("criterion 6: ablation direction on the hard split") {
  fs::path train_dir = fresh_dir("abl_train");
  fs::path hard_dir = fresh_dir("abl_hard");
  gen(train_dir, 2500, 601, 1, 8);
  gen(hard_dir, 500, 602, 1, 8, /*hard=*/true);

  auto run = [&](VariantKind kind, double lcc, double lco, uint64_t seed) {
    TrainConfig cfg = desk_config(kind, 10, 2);
    cfg.seed = seed;
    cfg.lambda_cc = lcc;
    cfg.lambda_co = lco;
    cfg.augment = true;  // train-time rotation/blur/noise
    TrainResult r = train(cfg, train_dir.string(), hard_dir.string(),
                          fresh_dir("abl_run").string());
    return r.best_acc;
  };

  auto median3 = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[1];
  };

  std::vector<double> full, bare, pd;
  for (uint64_t seed : {1, 2, 3}) {
    full.push_back(run(VariantKind::CPPD, 1.0, 1.0, seed));
    bare.push_back(run(VariantKind::CPPD, 0.0, 0.0, seed));
    pd.push_back(run(VariantKind::PD, 0.0, 0.0, seed));
  }
  double m_full = median3(full), m_bare = median3(bare), m_pd = median3(pd);
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "hard-split medians over 3 seeds: cppd+losses %.3f >= pd %.3f and >= "
                "cppd-no-side-loss %.3f",
                m_full, m_pd, m_bare);
  verdict(6, m_full >= m_pd && m_full >= m_bare, detail);
}

TEST_CASE("criterion 7: latency") {
  // L=25-capacity models of matched width/depth over narrow glyphs so texts
  // up to 24 characters fit the 100-px strip.
  fs::path train_dir = fresh_dir("lat_train");
  fs::path eval_dir = fresh_dir("lat_eval");
  gen(train_dir, 3000, 301, 1, 24, false, 3, 1);
  gen(eval_dir, 300, 302, 1, 24, false, 3, 1);

  TrainConfig base = desk_config(VariantKind::CPPD, 12, 2);
  base.l = 25;
  TrainResult cppd_run = train(base, train_dir.string(), eval_dir.string(),
                               fresh_dir("lat_cppd").string());
  TrainConfig arc = base;
  arc.variant = VariantKind::AR;
  arc.epochs = 16;
  arc.warmup_epochs = 3;
  TrainResult ar_run = train(arc, train_dir.string(), eval_dir.string(),
                             fresh_dir("lat_ar").string());

  Dataset ev = load_dataset(eval_dir.string());
  AnyModel cppd_m = build_model(VariantKind::CPPD, base, ev.charset.size(), ev.h, ev.w, 7);
  load_params(cppd_run.checkpoint_path, cppd_m.store());
  AnyModel ar_m = build_model(VariantKind::AR, arc, ev.charset.size(), ev.h, ev.w, 7);
  load_params(ar_run.checkpoint_path, ar_m.store());

  // fixed-length splits {2, 8, 16, 24}
  std::vector<int> lens = {2, 8, 16, 24};
  std::vector<BenchEntry> ar_e, cppd_e;
  for (int len : lens) {
    fs::path d = fresh_dir("lat_len" + std::to_string(len));
    gen(d, 300, 400 + static_cast<uint64_t>(len), len, len, false, 3, 1);
    Dataset ds = load_dataset(d.string());
    ar_e.push_back(bench_model(ar_m, ds, 300, 1, 20));
    cppd_e.push_back(bench_model(cppd_m, ds, 300, 1, 20));
  }

  // (a) AR nondecreasing in emitted length within noise bands
  bool mono = true;
  for (size_t i = 1; i < ar_e.size(); ++i)
    mono = mono && ar_e[i].mean_ms + ar_e[i].std_ms >= ar_e[i - 1].mean_ms - ar_e[i - 1].std_ms;

  // (b) CPPD flat within 10%
  double lo = cppd_e[0].mean_ms, hi = cppd_e[0].mean_ms;
  for (const auto& e : cppd_e) {
    lo = std::min(lo, e.mean_ms);
    hi = std::max(hi, e.mean_ms);
  }
  bool flat = (hi - lo) / hi < 0.10;

  // (c) speedup at capacity
  double ratio = speedup(ar_e.back(), cppd_e.back());

  BenchReport report;
  report.hardware = hardware_note();
  for (size_t i = 0; i < lens.size(); ++i) {
    BenchEntry a = ar_e[i];
    a.variant = "ar@" + std::to_string(lens[static_cast<size_t>(i)]);
    BenchEntry c = cppd_e[i];
    c.variant = "cppd@" + std::to_string(lens[static_cast<size_t>(i)]);
    report.entries.push_back(a);
    report.entries.push_back(c);
  }
  std::printf("%s", format_report(report).c_str());

  char detail[220];
  std::snprintf(detail, sizeof(detail),
                "ar ms %.2f/%.2f/%.2f/%.2f nondecreasing=%d; cppd spread %.1f%% (<10); "
                "speedup(ar->cppd)@24 = %.2fx (need >= 3); ar acc %.3f cppd acc %.3f",
                ar_e[0].mean_ms, ar_e[1].mean_ms, ar_e[2].mean_ms, ar_e[3].mean_ms,
                mono ? 1 : 0, 100.0 * (hi - lo) / hi, ratio, ar_run.best_acc,
                cppd_run.best_acc);
  verdict(7, mono && flat && ratio >= 3.0, detail);
}

TEST_CASE("criterion 8: seed-identical reproducibility") {
  DeskWorld& world = desk_world();
  TrainConfig cfg = desk_config(VariantKind::CPPD, 2, 1);

  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
  };
  auto metrics_body = [](const std::string& p) {
    std::ifstream in(p);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind('\t')) + "\n";
    return out;
  };

  TrainResult r1 = train(cfg, world.train_dir.string(), world.eval_dir.string(),
                         fresh_dir("rep1").string());
  TrainResult r2 = train(cfg, world.train_dir.string(), world.eval_dir.string(),
                         fresh_dir("rep2").string());
  bool ckpt_equal = slurp(r1.checkpoint_path) == slurp(r2.checkpoint_path);
  bool log_equal = metrics_body(r1.metrics_path) == metrics_body(r2.metrics_path);
  verdict(8, ckpt_equal && log_equal,
          ckpt_equal && log_equal
              ? "two seed-identical runs: bitwise-equal checkpoints, identical logs"
              : "runs diverged");
}
