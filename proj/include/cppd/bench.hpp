#pragma once

#include <string>
#include <vector>

#include "cppd/train.hpp"

namespace cppd {

struct BenchEntry {
  std::string variant;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double fps = 0.0;  // 1000 / mean_ms
  int decodes = 0;
};

struct BenchReport {
  std::vector<BenchEntry> entries;
  std::string hardware;
  int threads = 1;
};

/// Best-effort pinning of the calling thread to one CPU for the timed region.
void pin_current_thread();

std::string hardware_note();

/// Times batch-1 greedy decodes over the first n_samples of the dataset
/// (cycled if shorter), reps passes after warmup_reps discarded decodes.
/// The timed region covers model inference only; image tensors are prepared
/// up front and label encoding never enters the loop.
BenchEntry bench_model(AnyModel& model, const Dataset& ds, int n_samples, int reps,
                       int warmup_reps);

/// baseline mean / target mean.
double speedup(const BenchEntry& baseline, const BenchEntry& target);

std::string format_report(const BenchReport& report);

}  // namespace cppd
