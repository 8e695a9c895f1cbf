#include "cppd/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sched.h>
#include <sstream>

#include "cppd/labels.hpp"

namespace cppd {

void pin_current_thread() {
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(0, &set);
  sched_setaffinity(0, sizeof(set), &set);  // best effort; failure is fine
}

std::string hardware_note() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      size_t colon = line.find(':');
      if (colon != std::string::npos) return line.substr(colon + 2);
    }
  }
  return "unknown-cpu";
}

namespace {

std::string decode_once(AnyModel& model, const CharSet& charset, const Tensor<float>& image) {
  if (model.kind == VariantKind::CPPD) {
    auto out = model.cppd->forward(image, /*with_side_heads=*/false, /*record_attn=*/false);
    const auto& t = out.rec_logits->val;
    int l = t.dim(1), v = t.dim(2);
    std::vector<int> ids(static_cast<size_t>(l));
    for (int i = 0; i < l; ++i) {
      const float* row = t.data() + static_cast<int64_t>(i) * v;
      int best = 0;
      for (int c = 1; c < v; ++c)
        if (row[c] > row[best]) best = c;
      ids[static_cast<size_t>(i)] = best;
    }
    return ids_to_text(ids, charset);
  }
  if (model.kind == VariantKind::PD || model.kind == VariantKind::PD_P) {
    auto out = model.pd->forward(image, nullptr, /*with_side_head=*/false);
    const auto& t = out.rec_logits->val;
    int l = t.dim(1), v = t.dim(2);
    std::vector<int> ids(static_cast<size_t>(l));
    for (int i = 0; i < l; ++i) {
      const float* row = t.data() + static_cast<int64_t>(i) * v;
      int best = 0;
      for (int c = 1; c < v; ++c)
        if (row[c] > row[best]) best = c;
      ids[static_cast<size_t>(i)] = best;
    }
    return ids_to_text(ids, charset);
  }
  return ids_to_text(model.ar->greedy_decode(image), charset);
}

}  // namespace

BenchEntry bench_model(AnyModel& model, const Dataset& ds, int n_samples, int reps,
                       int warmup_reps) {
  if (ds.samples.empty()) throw std::runtime_error("bench: empty dataset");
  ag::NoGrad guard;
  tune_allocator();
  pin_current_thread();

  std::vector<Tensor<float>> images;
  images.reserve(static_cast<size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    const Image& src = ds.samples[static_cast<size_t>(i) % ds.samples.size()].image;
    Tensor<float> t({1, src.dim(0), src.dim(1)});
    std::copy(src.data(), src.data() + src.numel(), t.data());
    images.push_back(std::move(t));
  }

  for (int i = 0; i < warmup_reps; ++i)
    decode_once(model, ds.charset, images[static_cast<size_t>(i) % images.size()]);

  std::vector<double> times;
  times.reserve(static_cast<size_t>(n_samples) * reps);
  for (int r = 0; r < reps; ++r)
    for (const auto& img : images) {
      auto t0 = std::chrono::steady_clock::now();
      decode_once(model, ds.charset, img);
      auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }

  BenchEntry e;
  e.variant = variant_name(model.kind);
  e.decodes = static_cast<int>(times.size());
  double sum = 0.0;
  for (double t : times) sum += t;
  e.mean_ms = sum / static_cast<double>(times.size());
  double sq = 0.0;
  for (double t : times) sq += (t - e.mean_ms) * (t - e.mean_ms);
  e.std_ms = times.size() > 1 ? std::sqrt(sq / static_cast<double>(times.size() - 1)) : 0.0;
  e.fps = 1000.0 / e.mean_ms;
  return e;
}

double speedup(const BenchEntry& baseline, const BenchEntry& target) {
  return baseline.mean_ms / target.mean_ms;
}

std::string format_report(const BenchReport& report) {
  std::ostringstream os;
  os << "hardware: " << report.hardware << "  threads: " << report.threads << "\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-8s %12s %10s %10s %9s\n", "variant", "mean ms", "std ms",
                "FPS", "decodes");
  os << buf;
  for (const auto& e : report.entries) {
    std::snprintf(buf, sizeof(buf), "%-8s %12.3f %10.3f %10.1f %9d\n", e.variant.c_str(),
                  e.mean_ms, e.std_ms, e.fps, e.decodes);
    os << buf;
  }
  for (size_t i = 0; i < report.entries.size(); ++i)
    for (size_t j = 0; j < report.entries.size(); ++j) {
      if (i == j) continue;
      std::snprintf(buf, sizeof(buf), "speedup %s -> %s: %.2fx\n",
                    report.entries[i].variant.c_str(), report.entries[j].variant.c_str(),
                    speedup(report.entries[i], report.entries[j]));
      os << buf;
    }
  return os.str();
}

}  // namespace cppd
