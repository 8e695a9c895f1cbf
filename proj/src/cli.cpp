#include "cppd/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>

#include "cppd/attn_dump.hpp"
#include "cppd/bench.hpp"
#include "cppd/checkpoint.hpp"
#include "cppd/config.hpp"
#include "cppd/labels.hpp"
#include "cppd/log.hpp"
#include "cppd/losses.hpp"
#include "cppd/pgm.hpp"
#include "cppd/train.hpp"

namespace fs = std::filesystem;

namespace cppd {

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;

  Config make_config() const {
    Config c;
    if (!config_path.empty()) c.load_file(config_path);
    for (const auto& kv : overrides) c.set_kv(kv);
    return c;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (key = value lines)");
    cmd->add_option("--set,-O", overrides, "override config entries, section.key=value");
  }
};

CharSet charset_from_flags(const std::string& symbols, const std::string& file) {
  if (!symbols.empty() && !file.empty())
    throw std::runtime_error("pass either --charset or --charset-file, not both");
  if (!file.empty()) return CharSet::from_file(file);
  if (!symbols.empty()) return CharSet(symbols);
  return CharSet::alnum36();
}

int cmd_gen_data(const Common& common, const std::string& out_dir, int n,
                 const std::string& symbols, const std::string& charset_file, int64_t seed,
                 int64_t atlas_seed, bool augment, double aug_prob, double noise_sigma,
                 double rot_deg) {
  Config cfg = common.make_config();
  CharSet cs = charset_from_flags(symbols, charset_file);
  DatasetSpec spec;
  spec.n = n;
  spec.len_min = cfg.geti("data.len_min");
  spec.len_max = cfg.geti("data.len_max");
  spec.h = cfg.geti("data.h");
  spec.w = cfg.geti("data.w");
  spec.glyph_h = cfg.geti("data.glyph_h");
  spec.glyph_w = cfg.geti("data.glyph_w");
  spec.spacing = cfg.geti("data.spacing");
  spec.seed = static_cast<uint64_t>(seed);
  spec.atlas_seed = static_cast<uint64_t>(atlas_seed);
  spec.augment = augment;
  spec.aug = AugmentParams{aug_prob, rot_deg, aug_prob, aug_prob, noise_sigma};
  std::string manifest = generate_dataset(spec, cs, out_dir);
  log_info("gen-data: wrote %d samples under %s", n, out_dir.c_str());
  std::printf("%s\n", manifest.c_str());
  return 0;
}

int cmd_labels(const Common& common, const std::string& text, const std::string& symbols,
               const std::string& charset_file, int max_len) {
  Config cfg = common.make_config();
  if (max_len <= 0) max_len = cfg.geti("model.l");
  CharSet cs = charset_from_flags(symbols, charset_file);
  std::fputs(format_labels(text, cs, max_len).c_str(), stdout);
  return 0;
}

int cmd_train(const Common& common, const std::string& train_dir, const std::string& eval_dir,
              const std::string& out_dir, const std::string& variant, int64_t seed) {
  Config cfg = common.make_config();
  if (!variant.empty()) cfg.set("train.variant", variant);
  if (seed >= 0) cfg.set("train.seed", std::to_string(seed));
  TrainConfig tc = TrainConfig::from(cfg);
  TrainResult r = train(tc, train_dir, eval_dir, out_dir);
  std::printf("checkpoint %s\nmetrics %s\nbest_acc %.6f (epoch %d)\n", r.checkpoint_path.c_str(),
              r.metrics_path.c_str(), r.best_acc, r.best_epoch);
  return 0;
}

AnyModel load_model(const Config& cfg, VariantKind kind, const std::string& checkpoint,
                    int s, int h, int w) {
  TrainConfig tc = TrainConfig::from(cfg);
  AnyModel m = build_model(kind, tc, s, h, w, tc.seed);
  load_params(checkpoint, m.store());
  return m;
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& data_dir,
             const std::string& variant) {
  Config cfg = common.make_config();
  Dataset ds = load_dataset(data_dir);
  AnyModel m = load_model(cfg, parse_variant(variant), checkpoint, ds.charset.size(), ds.h,
                          ds.w);
  double acc = evaluate(m, ds);
  std::printf("word_accuracy %.6f (%zu samples)\n", acc, ds.samples.size());
  return 0;
}

int cmd_bench(const Common& common, const std::vector<std::string>& checkpoints,
              const std::vector<std::string>& variants, const std::string& data_dir) {
  if (checkpoints.size() != variants.size() || checkpoints.empty())
    throw std::runtime_error("bench: pass one --checkpoint per --variant");
  Config cfg = common.make_config();
  Dataset ds = load_dataset(data_dir);
  BenchReport report;
  report.hardware = hardware_note();
  int samples = cfg.geti("bench.samples");
  int reps = cfg.geti("bench.reps");
  int warmup = cfg.geti("bench.warmup");
  for (size_t i = 0; i < checkpoints.size(); ++i) {
    AnyModel m = load_model(cfg, parse_variant(variants[i]), checkpoints[i],
                            ds.charset.size(), ds.h, ds.w);
    report.entries.push_back(bench_model(m, ds, samples, reps, warmup));
  }
  std::fputs(format_report(report).c_str(), stdout);
  return 0;
}

int cmd_grad_check(int64_t seed) {
  using D = double;
  Pcg32 rng(static_cast<uint64_t>(seed), 77);
  bool all_ok = true;
  auto report = [&](const char* name, double err, double tol) {
    bool ok = err < tol;
    all_ok = all_ok && ok;
    std::printf("grad-check %-12s %s  (max rel err %.3e, tol %.0e)\n", name,
                ok ? "PASS" : "FAIL", err, tol);
  };

  const int s = 5, l = 4, v = s + 2;
  auto rand_logits = [&](std::vector<int> shape) {
    Tensor<D> t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
    return ag::leaf(std::move(t), true);
  };

  {
    std::vector<int> counts(s);
    for (int i = 0; i < s; ++i) counts[static_cast<size_t>(i)] = static_cast<int>(rng.next_below(l + 1));
    std::vector<ag::Var<D>> ps = {rand_logits({s, l + 1})};
    report("cc_loss",
           nn::grad_check<D>(
               [&](const std::vector<ag::Var<D>>& p) {
                 return losses::cc_loss(ag::softmax_last(p[0]), counts);
               },
               ps),
           1e-5);
  }
  {
    Tensor<D> w({s + 1});
    int left = l;
    for (int i = 0; i < s; ++i) {
      int take = static_cast<int>(rng.next_below(static_cast<uint32_t>(left / 2 + 1)));
      w[i] = static_cast<D>(take) / l;
      left -= take;
    }
    w[s] = static_cast<D>(left) / l;
    auto wv = ag::constant(w);
    std::vector<ag::Var<D>> ps = {rand_logits({l, s + 1})};
    report("ace_loss",
           nn::grad_check<D>(
               [&](const std::vector<ag::Var<D>>& p) {
                 return losses::ace_loss(ag::softmax_last(p[0]), wv);
               },
               ps),
           1e-5);
  }
  {
    std::vector<uint8_t> mask(l);
    int n = static_cast<int>(rng.next_below(l));
    for (int i = 0; i < l; ++i) mask[static_cast<size_t>(i)] = i < n ? 1 : 0;
    std::vector<ag::Var<D>> ps = {rand_logits({l})};
    report("co_loss",
           nn::grad_check<D>(
               [&](const std::vector<ag::Var<D>>& p) {
                 return losses::co_loss(ag::sigmoid(p[0]), mask);
               },
               ps),
           1e-5);
  }
  {
    std::vector<int> slots(l);
    for (int i = 0; i < l; ++i) slots[static_cast<size_t>(i)] = static_cast<int>(rng.next_below(v));
    std::vector<ag::Var<D>> ps = {rand_logits({l, v})};
    report("rec_loss",
           nn::grad_check<D>(
               [&](const std::vector<ag::Var<D>>& p) {
                 return losses::rec_loss(ag::softmax_last(p[0]), slots);
               },
               ps),
           1e-5);
  }
  {
    std::vector<int> slots = {1, 2, s, s + 1};  // two chars, EOS, one pad
    std::vector<ag::Var<D>> ps = {rand_logits({l, v})};
    report("ar_nll",
           nn::grad_check<D>(
               [&](const std::vector<ag::Var<D>>& p) {
                 return losses::ar_nll(ag::softmax_last(p[0]), slots, s + 1);
               },
               ps),
           1e-5);
  }
  {
    // end-to-end tiny model: every parameter against central differences
    CppdConfig cc{s, l, 8, 2, 2, 2};
    EncoderConfig ec{32, 16, 8, 1, 2, 2};
    CppdModel<D> model(cc, ec, static_cast<uint64_t>(seed));
    Tensor<D> images({2, 32, 16});
    for (int64_t i = 0; i < images.numel(); ++i) images[i] = rng.next_double();
    std::vector<int> counts = {1, 0, 1, 0, 0, 2, 0, 0, 0, 0};
    std::vector<uint8_t> mask = {1, 1, 0, 0, 1, 1, 0, 0};
    std::vector<int> slots = {0, 2, s, s + 1, 5 % v, 5 % v, s, s + 1};
    std::vector<ag::Var<D>> ps;
    for (auto& [name, var] : model.store.items) ps.push_back(var);
    auto fn = [&](const std::vector<ag::Var<D>>&) {
      auto out = model.forward(images);
      auto lcc = losses::cc_loss(ag::softmax_last(out.cc_logits), counts);
      auto lco = losses::co_loss(ag::sigmoid(out.co_logits), mask);
      auto lrec = losses::rec_loss(ag::softmax_last(out.rec_logits), slots);
      return losses::total_loss(lcc, lco, lrec).total;
    };
    report("cppd_e2e", nn::grad_check<D>(fn, ps), 1e-4);
  }
  return all_ok ? 0 : 1;
}

int cmd_dump_attn(const Common& common, const std::string& checkpoint,
                  const std::string& image_path, const std::string& out_dir) {
  Config cfg = common.make_config();
  Image image = read_pgm(image_path);
  auto entries = load_checkpoint_entries(checkpoint);
  int s = -1, l = -1, d = -1;
  for (const auto& e : entries) {
    if (e.name == "cppd.e_cc") {
      s = e.dims.at(0);
      d = e.dims.at(1);
    }
    if (e.name == "cppd.e_co") l = e.dims.at(0);
  }
  if (s < 0 || l < 0) throw std::runtime_error("dump-attn: checkpoint is not a cppd model");
  CppdConfig cc{s, l, d, cfg.geti("model.depth"), cfg.geti("model.heads"),
                cfg.geti("model.mlp_ratio")};
  EncoderConfig ec{image.dim(0), image.dim(1), d, cfg.geti("model.enc_depth"),
                   cfg.geti("model.heads"), cfg.geti("model.mlp_ratio")};
  CppdModel<float> model(cc, ec, 0);
  load_params(checkpoint, model.store);
  int files = dump_attention(model, image, out_dir);
  std::printf("wrote %d attention maps under %s\n", files, out_dir.c_str());
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  tune_allocator();
  CLI::App app{"desk-scale text recognition lab: parallel decoder with character counting and "
               "ordering context, six comparison decoders, synthetic data, and a latency bench"};
  app.require_subcommand(1);
  int exit_code = 0;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic glyph-text dataset");
  Common gen_common;
  gen_common.attach(gen);
  std::string gen_out, gen_symbols, gen_charset_file;
  int gen_n = 0;
  int64_t gen_seed = 0, gen_atlas_seed = 0;
  bool gen_augment = false;
  double gen_aug_prob = 0.5, gen_noise_sigma = 0.05, gen_rot_deg = 5.0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n", gen_n, "sample count")->required();
  gen->add_option("--charset", gen_symbols, "symbols as one string");
  gen->add_option("--charset-file", gen_charset_file, "one symbol per line");
  gen->add_option("--seed", gen_seed, "sample stream seed (texts, augmentation)");
  gen->add_option("--atlas-seed", gen_atlas_seed, "glyph shape seed; keep equal across splits");
  gen->add_flag("--augment", gen_augment, "apply random rotation/blur/noise");
  gen->add_option("--aug-prob", gen_aug_prob, "per-op augmentation probability");
  gen->add_option("--noise-sigma", gen_noise_sigma, "gaussian noise sigma");
  gen->add_option("--rot-deg", gen_rot_deg, "max rotation in degrees");
  gen->callback([&] {
    exit_code = cmd_gen_data(gen_common, gen_out, gen_n, gen_symbols, gen_charset_file,
                             gen_seed, gen_atlas_seed, gen_augment, gen_aug_prob,
                             gen_noise_sigma, gen_rot_deg);
  });

  // labels
  auto* lab = app.add_subcommand("labels", "dump CC/CO/REC/ACE supervision targets for a text");
  Common lab_common;
  lab_common.attach(lab);
  std::string lab_text, lab_symbols, lab_charset_file;
  int lab_l = 0;
  lab->add_option("text", lab_text, "label string")->required();
  lab->add_option("--charset", lab_symbols, "symbols as one string");
  lab->add_option("--charset-file", lab_charset_file, "one symbol per line");
  lab->add_option("--l", lab_l, "sequence capacity L (default model.l)");
  lab->callback([&] {
    exit_code = cmd_labels(lab_common, lab_text, lab_symbols, lab_charset_file, lab_l);
  });

  // train
  auto* tr = app.add_subcommand("train", "train a decoder variant");
  Common tr_common;
  tr_common.attach(tr);
  std::string tr_train, tr_eval, tr_out, tr_variant;
  int64_t tr_seed = -1;
  tr->add_option("--train-dir", tr_train, "training dataset dir")->required();
  tr->add_option("--eval-dir", tr_eval, "eval dataset dir")->required();
  tr->add_option("--out", tr_out, "output dir for checkpoint and metrics")->required();
  tr->add_option("--variant", tr_variant, "ar | ar-p | ar-l | ar-l-p | pd | pd-p | cppd");
  tr->add_option("--seed", tr_seed, "training seed (overrides train.seed)");
  tr->callback(
      [&] { exit_code = cmd_train(tr_common, tr_train, tr_eval, tr_out, tr_variant, tr_seed); });

  // eval
  auto* ev = app.add_subcommand("eval", "word accuracy of a checkpoint on a dataset");
  Common ev_common;
  ev_common.attach(ev);
  std::string ev_ckpt, ev_data, ev_variant;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset dir")->required();
  ev->add_option("--variant", ev_variant, "decoder variant of the checkpoint")->required();
  ev->callback([&] { exit_code = cmd_eval(ev_common, ev_ckpt, ev_data, ev_variant); });

  // bench
  auto* be = app.add_subcommand("bench", "single-thread batch-1 latency benchmark");
  Common be_common;
  be_common.attach(be);
  std::vector<std::string> be_ckpts, be_variants;
  std::string be_data;
  be->add_option("--checkpoint", be_ckpts, "checkpoint file (repeat per variant)")->required();
  be->add_option("--variant", be_variants, "decoder variant (repeatable)")->required();
  be->add_option("--data", be_data, "dataset dir")->required();
  be->callback([&] { exit_code = cmd_bench(be_common, be_ckpts, be_variants, be_data); });

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "finite-difference checks for losses and a tiny "
                                              "end-to-end model (f64)");
  int64_t gc_seed = 0;
  gc->add_option("--seed", gc_seed, "rng seed");
  gc->callback([&] { exit_code = cmd_grad_check(gc_seed); });

  // dump-attn
  auto* da = app.add_subcommand("dump-attn", "write attention maps of a cppd checkpoint as PGMs");
  Common da_common;
  da_common.attach(da);
  std::string da_ckpt, da_image, da_out;
  da->add_option("--checkpoint", da_ckpt, "cppd checkpoint")->required();
  da->add_option("--image", da_image, "input PGM image")->required();
  da->add_option("--out", da_out, "output directory")->required();
  da->callback([&] { exit_code = cmd_dump_attn(da_common, da_ckpt, da_image, da_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return exit_code;
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("cppd");
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cppd
