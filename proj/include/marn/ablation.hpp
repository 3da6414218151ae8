#pragma once

// Variant sweep: every named variant trained over several seeds on freshly
// generated splits, scored on the test split and on its motion-confusable-only
// subset.

#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "marn/config.hpp"
#include "marn/metrics.hpp"

namespace marn {

struct AblationSetup {
  RunConfig base;  // flags and seed are overwritten per run
  std::vector<std::string> variants = variant_names();
  std::size_t seeds = 5;
  std::uint64_t first_seed = 1;
  std::size_t train_count = 500;
  std::size_t val_count = 100;
  std::size_t test_count = 200;
};

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  EvalReport test;
  double motion_confusable_r1 = 0.0;  // R@1, IoU=0.5 on the subset
  std::size_t subset_size = 0;
  std::size_t best_epoch = 0;
  std::size_t parameters = 0;
  double seconds = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation across seeds
};

struct AblationResult {
  std::vector<std::string> variants;
  std::vector<AblationRun> runs;

  // Per-seed values of R@n, IoU=m for one variant, ordered by seed.
  std::vector<double> values(const std::string& variant, std::size_t n, double m) const;
  std::vector<double> subset_values(const std::string& variant) const;
  MeanStd summary(const std::string& variant, std::size_t n, double m) const;
  MeanStd subset_summary(const std::string& variant) const;

  std::string table() const;
  nlohmann::json to_json() const;
};

MeanStd mean_std(const std::vector<double>& values);

// Progress lines (one per finished run) go to `log` when given.
AblationResult run_ablation(const AblationSetup& setup, std::ostream* log = nullptr);

}  // namespace marn
