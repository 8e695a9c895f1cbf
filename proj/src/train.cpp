#include "cppd/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <malloc.h>
#include <sstream>

#include "cppd/checkpoint.hpp"
#include "cppd/labels.hpp"
#include "cppd/log.hpp"
#include "cppd/losses.hpp"

namespace fs = std::filesystem;

namespace cppd {

void tune_allocator() {
  // Activation tensors churn through multi-MB allocations every step; keep
  // them in the arena instead of mmap/munmap round trips.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, -1);
}

TrainConfig TrainConfig::from(const Config& c) {
  TrainConfig t;
  t.variant = parse_variant(c.gets("train.variant"));
  t.epochs = c.geti("train.epochs");
  t.warmup_epochs = c.geti("train.warmup_epochs");
  t.batch = c.geti("train.batch");
  t.weight_decay = c.getd("train.weight_decay");
  t.lr_scale = c.getd("train.lr_scale");
  t.clip_norm = c.getd("train.clip_norm");
  t.beta1 = c.getd("train.beta1");
  t.beta2 = c.getd("train.beta2");
  t.adam_eps = c.getd("train.adam_eps");
  t.lambda_cc = c.getd("train.lambda_cc");
  t.lambda_co = c.getd("train.lambda_co");
  t.lambda_rec = c.getd("train.lambda_rec");
  t.seed = static_cast<uint64_t>(c.geti("train.seed"));
  t.augment = c.getb("train.augment");
  t.aug_prob = c.getd("train.aug_prob");
  t.aug_rot_deg = c.getd("train.aug_rot_deg");
  t.aug_noise_sigma = c.getd("train.aug_noise_sigma");
  t.eval_every = c.geti("train.eval_every");
  t.log_every = c.geti("train.log_every");
  t.d = c.geti("model.d");
  t.depth = c.geti("model.depth");
  t.heads = c.geti("model.heads");
  t.mlp_ratio = c.geti("model.mlp_ratio");
  t.l = c.geti("model.l");
  t.enc_depth = c.geti("model.enc_depth");
  return t;
}

double lr_at(int64_t step, int64_t total_steps, int64_t warmup_steps, double peak) {
  if (total_steps <= 0 || step >= total_steps) return 0.0;
  if (warmup_steps > 0 && step < warmup_steps)
    return peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
  double progress = static_cast<double>(step - warmup_steps) /
                    static_cast<double>(total_steps - warmup_steps);
  return peak * 0.5 * (1.0 + std::cos(M_PI * progress));
}

nn::ParamStore<float>& AnyModel::store() {
  if (cppd) return cppd->store;
  if (ar) return ar->store;
  if (pd) return pd->store;
  throw std::logic_error("AnyModel: empty");
}

const nn::ParamStore<float>& AnyModel::store() const {
  return const_cast<AnyModel*>(this)->store();
}

const Encoder<float>& AnyModel::enc() const {
  if (cppd) return cppd->enc();
  if (ar) return ar->enc();
  if (pd) return pd->enc();
  throw std::logic_error("AnyModel: empty");
}

AnyModel build_model(VariantKind kind, const TrainConfig& cfg, int s, int h, int w,
                     uint64_t seed) {
  EncoderConfig ec{h, w, cfg.d, cfg.enc_depth, cfg.heads, cfg.mlp_ratio};
  AnyModel m;
  m.kind = kind;
  if (kind == VariantKind::CPPD) {
    CppdConfig cc{s, cfg.l, cfg.d, cfg.depth, cfg.heads, cfg.mlp_ratio};
    m.cppd = std::make_unique<CppdModel<float>>(cc, ec, seed);
  } else {
    VariantConfig vc{s, cfg.l, cfg.d, cfg.depth, cfg.heads, cfg.mlp_ratio};
    if (is_ar_kind(kind))
      m.ar = std::make_unique<ArModel<float>>(kind, vc, ec, seed);
    else
      m.pd = std::make_unique<PdModel<float>>(kind, vc, ec, seed);
  }
  return m;
}

namespace {

Tensor<float> to_batch(const std::vector<const Image*>& images) {
  int b = static_cast<int>(images.size());
  int h = images[0]->dim(0), w = images[0]->dim(1);
  Tensor<float> out({b, h, w});
  for (int i = 0; i < b; ++i)
    std::copy(images[static_cast<size_t>(i)]->data(),
              images[static_cast<size_t>(i)]->data() + static_cast<int64_t>(h) * w,
              out.data() + static_cast<int64_t>(i) * h * w);
  return out;
}

std::string decode_logit_rows(const float* row0, int l, int v, const CharSet& charset) {
  std::vector<int> ids(static_cast<size_t>(l));
  for (int i = 0; i < l; ++i) {
    const float* row = row0 + static_cast<int64_t>(i) * v;
    int best = 0;
    for (int c = 1; c < v; ++c)
      if (row[c] > row[best]) best = c;
    ids[static_cast<size_t>(i)] = best;
  }
  return ids_to_text(ids, charset);
}

/// Batched greedy predictions for every sample of a dataset.
std::vector<std::string> predict_all(AnyModel& model, const Dataset& ds) {
  std::vector<std::string> preds;
  preds.reserve(ds.samples.size());
  ag::NoGrad guard;
  if (model.kind == VariantKind::CPPD || model.kind == VariantKind::PD ||
      model.kind == VariantKind::PD_P) {
    constexpr int kChunk = 64;
    for (size_t at = 0; at < ds.samples.size(); at += kChunk) {
      size_t end = std::min(at + kChunk, ds.samples.size());
      std::vector<const Image*> images;
      for (size_t i = at; i < end; ++i) images.push_back(&ds.samples[i].image);
      Tensor<float> batch = to_batch(images);
      nn::Var<float> logits;
      int l, v;
      if (model.kind == VariantKind::CPPD) {
        auto out = model.cppd->forward(batch, /*with_side_heads=*/false, /*record_attn=*/false);
        logits = out.rec_logits;
        l = model.cppd->cfg.l;
        v = model.cppd->cfg.vocab();
      } else {
        auto out = model.pd->forward(batch, nullptr, /*with_side_head=*/false);
        logits = out.rec_logits;
        l = model.pd->cfg.l;
        v = model.pd->cfg.vocab();
      }
      for (size_t i = at; i < end; ++i)
        preds.push_back(decode_logit_rows(
            logits->val.data() + static_cast<int64_t>(i - at) * l * v, l, v, ds.charset));
    }
  } else {
    for (const auto& s : ds.samples) {
      Tensor<float> one({1, s.image.dim(0), s.image.dim(1)});
      std::copy(s.image.data(), s.image.data() + s.image.numel(), one.data());
      preds.push_back(ids_to_text(model.ar->greedy_decode(one), ds.charset));
    }
  }
  return preds;
}

}  // namespace

std::string predict_one(AnyModel& model, const CharSet& charset, const Image& image) {
  Dataset tmp{charset, {SampleRecord{"x", "", image}}, image.dim(0), image.dim(1)};
  return predict_all(model, tmp)[0];
}

double evaluate_core(const Dataset& ds,
                     const std::function<std::string(const SampleRecord&)>& predict_fn) {
  if (ds.samples.empty()) throw std::runtime_error("evaluate: empty eval set");
  int64_t correct = 0;
  for (const auto& s : ds.samples)
    if (predict_fn(s) == s.text) ++correct;
  return static_cast<double>(correct) / static_cast<double>(ds.samples.size());
}

double evaluate(AnyModel& model, const Dataset& ds) {
  if (ds.samples.empty()) throw std::runtime_error("evaluate: empty eval set");
  std::vector<std::string> preds = predict_all(model, ds);
  int64_t correct = 0;
  for (size_t i = 0; i < ds.samples.size(); ++i)
    if (preds[i] == ds.samples[i].text) ++correct;
  return static_cast<double>(correct) / static_cast<double>(ds.samples.size());
}

namespace {

struct AdamW {
  double beta1, beta2, eps, wd;
  int64_t t = 0;
  std::vector<Tensor<float>> m, v;

  explicit AdamW(const TrainConfig& cfg)
      : beta1(cfg.beta1), beta2(cfg.beta2), eps(cfg.adam_eps), wd(cfg.weight_decay) {}

  void step(nn::ParamStore<float>& store, double lr, double clip_norm) {
    if (m.empty()) {
      for (const auto& [name, var] : store.items) {
        m.emplace_back(var->val.shape());
        v.emplace_back(var->val.shape());
      }
    }
    double sq = 0.0;
    for (auto& [name, var] : store.items) {
      var->ensure_grad();
      for (int64_t i = 0; i < var->grad.numel(); ++i) {
        double g = var->grad[i];
        sq += g * g;
      }
    }
    double norm = std::sqrt(sq);
    double scale = (clip_norm > 0 && norm > clip_norm) ? clip_norm / norm : 1.0;
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t pi = 0; pi < store.items.size(); ++pi) {
      auto& var = store.items[pi].second;
      Tensor<float>& mi = m[pi];
      Tensor<float>& vi = v[pi];
      for (int64_t i = 0; i < var->val.numel(); ++i) {
        double g = static_cast<double>(var->grad[i]) * scale;
        double mn = beta1 * mi[i] + (1.0 - beta1) * g;
        double vn = beta2 * vi[i] + (1.0 - beta2) * g * g;
        mi[i] = static_cast<float>(mn);
        vi[i] = static_cast<float>(vn);
        double update = (mn / bc1) / (std::sqrt(vn / bc2) + eps) +
                        wd * static_cast<double>(var->val[i]);
        var->val[i] = static_cast<float>(var->val[i] - lr * update);
        var->grad[i] = 0.0f;
      }
    }
  }
};

struct BatchLabels {
  std::vector<int> rec;       // B*L slot ids
  std::vector<int> cc;        // B*S counts
  std::vector<uint8_t> co;    // B*L mask
};

BatchLabels encode_batch(const std::vector<const SampleRecord*>& samples, const CharSet& cs,
                         int l) {
  BatchLabels out;
  for (const auto* s : samples) {
    RecLabel r = encode_rec(s->text, cs, l);
    CCLabel c = encode_cc(s->text, cs, l);
    COLabel o = encode_co(s->text, l);
    out.rec.insert(out.rec.end(), r.slots.begin(), r.slots.end());
    out.cc.insert(out.cc.end(), c.counts.begin(), c.counts.end());
    out.co.insert(out.co.end(), o.mask.begin(), o.mask.end());
  }
  return out;
}

struct StepLoss {
  ag::Var<float> total;
  double cc = 0.0, co = 0.0, rec = 0.0;
};

StepLoss compute_loss(AnyModel& model, const TrainConfig& cfg, const Tensor<float>& images,
                      const BatchLabels& lab, const CharSet& cs, Pcg32& perm_rng) {
  StepLoss out;
  if (model.kind == VariantKind::CPPD) {
    auto o = model.cppd->forward(images, /*with_side_heads=*/true, /*record_attn=*/false);
    auto cc = losses::cc_loss(ag::softmax_last(o.cc_logits), lab.cc);
    auto co = losses::co_loss(ag::sigmoid(o.co_logits), lab.co);
    auto rec = losses::rec_loss(ag::softmax_last(o.rec_logits), lab.rec);
    auto lv = losses::total_loss(cc, co, rec, static_cast<float>(cfg.lambda_cc),
                                 static_cast<float>(cfg.lambda_co),
                                 static_cast<float>(cfg.lambda_rec));
    out.total = lv.total;
    out.cc = lv.cc;
    out.co = lv.co;
    out.rec = lv.rec;
  } else if (is_ar_kind(model.kind)) {
    int b = images.dim(0);
    auto perms = model.ar->make_perms(lab.rec, b, perm_rng);
    auto logits = model.ar->train_forward(images, lab.rec, perms);
    out.total = losses::ar_nll(ag::softmax_last(logits), lab.rec, cs.pad_id());
    out.rec = static_cast<double>(out.total->val[0]);
  } else {
    auto o = model.pd->forward(images, nullptr, /*with_side_head=*/true);
    auto rec = losses::rec_loss(ag::softmax_last(o.rec_logits), lab.rec);
    if (model.kind == VariantKind::PD_P) {
      auto side = losses::rec_loss(ag::softmax_last(o.side_logits), lab.rec);
      out.total = losses::add_scalars(rec, side);
    } else {
      out.total = rec;
    }
    out.rec = static_cast<double>(out.total->val[0]);
  }
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::string& train_dir,
                  const std::string& eval_dir, const std::string& out_dir) {
  cfg.validate();
  tune_allocator();
  Dataset tr = load_dataset(train_dir);
  Dataset ev = load_dataset(eval_dir);
  if (!(tr.charset == ev.charset))
    throw std::runtime_error("train: dataset/charset mismatch between train and eval sets");
  for (const Dataset* ds : {&tr, &ev})
    for (const auto& s : ds->samples)
      if (static_cast<int>(s.text.size()) > cfg.l - 1)
        throw std::runtime_error("train: sample '" + s.id + "' exceeds L-1 = " +
                                 std::to_string(cfg.l - 1) + " characters");
  if (tr.samples.empty()) throw std::runtime_error("train: empty training set");

  fs::create_directories(out_dir);
  TrainResult result;
  result.checkpoint_path = (fs::path(out_dir) / "checkpoint.bin").string();
  result.metrics_path = (fs::path(out_dir) / "metrics.tsv").string();

  AnyModel model = build_model(cfg.variant, cfg, tr.charset.size(), tr.h, tr.w, cfg.seed);
  log_info("train: %s, %lld params, %zu train / %zu eval samples",
           variant_name(cfg.variant), static_cast<long long>(model.store().total_size()),
           tr.samples.size(), ev.samples.size());

  std::string metrics_tmp = result.metrics_path + ".tmp";
  std::ofstream metrics(metrics_tmp, std::ios::trunc);
  if (!metrics) throw std::runtime_error("train: cannot write " + metrics_tmp);
  metrics.precision(6);
  metrics << std::fixed;

  auto t_start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - t_start)
        .count();
  };

  if (cfg.epochs == 0) {
    save_params(result.checkpoint_path, model.store());
    metrics.close();
    if (std::rename(metrics_tmp.c_str(), result.metrics_path.c_str()) != 0)
      throw std::runtime_error("train: rename failed for " + result.metrics_path);
    return result;
  }

  int n = static_cast<int>(tr.samples.size());
  int64_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  int64_t total_steps = steps_per_epoch * cfg.epochs;
  int64_t warmup_steps = steps_per_epoch * cfg.warmup_epochs;
  double peak = cfg.base_lr();

  AdamW opt(cfg);
  Pcg32 shuffle_rng(cfg.seed, kShuffleStream);
  Pcg32 perm_rng(cfg.seed, kPermStream);
  Pcg32 aug_rng(cfg.seed, kAugStream);
  AugmentParams aug{cfg.aug_prob, cfg.aug_rot_deg, cfg.aug_prob, cfg.aug_prob,
                    cfg.aug_noise_sigma};

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  result.best_acc = -1.0;
  int64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle_rng.next_below(static_cast<uint32_t>(i + 1)));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    for (int at = 0; at < n; at += cfg.batch) {
      int bsz = std::min(cfg.batch, n - at);
      std::vector<const SampleRecord*> batch;
      std::vector<Image> augmented;
      augmented.reserve(static_cast<size_t>(bsz));
      std::vector<const Image*> images;
      for (int i = 0; i < bsz; ++i) {
        const SampleRecord& s = tr.samples[static_cast<size_t>(order[static_cast<size_t>(at + i)])];
        batch.push_back(&s);
        if (cfg.augment) {
          augmented.push_back(augment(s.image, aug, aug_rng));
          images.push_back(&augmented.back());
        } else {
          images.push_back(&s.image);
        }
      }
      Tensor<float> image_batch = to_batch(images);
      BatchLabels lab = encode_batch(batch, tr.charset, cfg.l);
      StepLoss loss = compute_loss(model, cfg, image_batch, lab, tr.charset, perm_rng);
      double total = static_cast<double>(loss.total->val[0]);
      if (!std::isfinite(total))
        throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch) + " step " + std::to_string(step) +
                                 "; cc=" + std::to_string(loss.cc) + " co=" +
                                 std::to_string(loss.co) + " rec=" + std::to_string(loss.rec));
      ag::backward(loss.total);
      opt.step(model.store(), lr_at(step, total_steps, warmup_steps, peak), cfg.clip_norm);
      if (step % cfg.log_every == 0)
        metrics << epoch << '\t' << step << '\t' << total << '\t' << loss.cc << '\t' << loss.co
                << '\t' << loss.rec << '\t' << '-' << '\t' << elapsed_ms() << '\n';
      ++step;
    }
    if ((epoch + 1) % cfg.eval_every == 0 || epoch == cfg.epochs - 1) {
      double acc = evaluate(model, ev);
      metrics << epoch << '\t' << step << '\t' << '-' << '\t' << '-' << '\t' << '-' << '\t'
              << '-' << '\t' << acc << '\t' << elapsed_ms() << '\n';
      log_info("train: epoch %d word-acc %.4f", epoch, acc);
      if (acc > result.best_acc) {
        result.best_acc = acc;
        result.best_epoch = epoch;
        save_params(result.checkpoint_path, model.store());
      }
    }
  }

  metrics.close();
  if (std::rename(metrics_tmp.c_str(), result.metrics_path.c_str()) != 0)
    throw std::runtime_error("train: rename failed for " + result.metrics_path);
  return result;
}

}  // namespace cppd
