#pragma once

#include <functional>
#include <memory>
#include <string>

#include "cppd/config.hpp"
#include "cppd/synth.hpp"
#include "cppd/variants.hpp"

namespace cppd {

// Seed streams used by the training loop.
constexpr uint64_t kShuffleStream = 11;
constexpr uint64_t kPermStream = 12;
constexpr uint64_t kAugStream = 13;

struct TrainConfig {
  VariantKind variant = VariantKind::CPPD;
  int epochs = 30;
  int warmup_epochs = 6;
  int batch = 64;
  double weight_decay = 0.05;
  double lr_scale = 1.0;
  double clip_norm = 1.0;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double lambda_cc = 1.0, lambda_co = 1.0, lambda_rec = 1.0;
  uint64_t seed = 0;
  bool augment = false;
  double aug_prob = 0.3, aug_rot_deg = 5.0, aug_noise_sigma = 0.05;
  int eval_every = 1;
  int log_every = 1;
  int d = 64, depth = 2, heads = 4, mlp_ratio = 4, l = 25, enc_depth = 2;

  static TrainConfig from(const Config& c);

  /// Peak learning rate: 5e-4 scaled by batch/1024 (times lr_scale, the
  /// small-data compensation knob).
  double base_lr() const { return 5e-4 * batch / 1024.0 * lr_scale; }

  void validate() const {
    if (batch < 1) throw std::invalid_argument("train: batch must be >= 1");
    if (epochs > 0 && warmup_epochs >= epochs)
      throw std::invalid_argument("train: warmup_epochs must be < epochs");
  }
};

/// Process-global allocator tuning for tensor churn; idempotent.
void tune_allocator();

/// Cosine decay with linear warmup; lr_at(0) = 0 when warmup is on and
/// lr_at(total) = 0 exactly. Training applies steps 0..total-1.
double lr_at(int64_t step, int64_t total_steps, int64_t warmup_steps, double peak);

/// Variant-dispatching holder for the f32 training stack.
struct AnyModel {
  VariantKind kind = VariantKind::CPPD;
  std::unique_ptr<CppdModel<float>> cppd;
  std::unique_ptr<ArModel<float>> ar;
  std::unique_ptr<PdModel<float>> pd;

  nn::ParamStore<float>& store();
  const nn::ParamStore<float>& store() const;
  const Encoder<float>& enc() const;
};

AnyModel build_model(VariantKind kind, const TrainConfig& cfg, int s, int h, int w,
                     uint64_t seed);

/// Greedy text prediction for one image, variant-appropriate.
std::string predict_one(AnyModel& model, const CharSet& charset, const Image& image);

/// Word accuracy of an arbitrary prediction callback.
double evaluate_core(const Dataset& ds,
                     const std::function<std::string(const SampleRecord&)>& predict_fn);

/// Word accuracy of a model over a dataset (batched where the variant
/// decodes in parallel).
double evaluate(AnyModel& model, const Dataset& ds);

struct TrainResult {
  std::string checkpoint_path;
  std::string metrics_path;
  double best_acc = 0.0;
  int best_epoch = -1;
};

/// Deterministic training loop: AdamW (decoupled weight decay), global-norm
/// gradient clipping, warmup+cosine schedule, periodic eval, best checkpoint
/// by eval word accuracy.
TrainResult train(const TrainConfig& cfg, const std::string& train_dir,
                  const std::string& eval_dir, const std::string& out_dir);

}  // namespace cppd
