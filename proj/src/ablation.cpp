#include "marn/ablation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "marn/model.hpp"
#include "marn/train.hpp"

namespace marn {

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  for (double v : values) r.stddev += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(r.stddev / static_cast<double>(values.size()));
  return r;
}

std::vector<double> AblationResult::values(const std::string& variant, std::size_t n,
                                           double m) const {
  std::vector<double> out;
  for (const auto& r : runs) {
    if (r.variant == variant) out.push_back(r.test.at(n, m));
  }
  return out;
}

std::vector<double> AblationResult::subset_values(const std::string& variant) const {
  std::vector<double> out;
  for (const auto& r : runs) {
    if (r.variant == variant) out.push_back(r.motion_confusable_r1);
  }
  return out;
}

MeanStd AblationResult::summary(const std::string& variant, std::size_t n, double m) const {
  return mean_std(values(variant, n, m));
}

MeanStd AblationResult::subset_summary(const std::string& variant) const {
  return mean_std(subset_values(variant));
}

std::string AblationResult::table() const {
  std::ostringstream out;
  if (runs.empty()) return "no runs\n";
  const auto& grid = runs.front().test.grid;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%-22s", "variant");
  out << buf;
  for (auto n : grid.ns) {
    for (auto m : grid.ms) {
      std::snprintf(buf, sizeof buf, "  %15s", ("R@" + std::to_string(n) + ",IoU=" +
                                                 std::to_string(m).substr(0, 3)).c_str());
      out << buf;
    }
  }
  out << "  motion-confusable R@1,IoU=0.5\n";
  for (const auto& v : variants) {
    std::snprintf(buf, sizeof buf, "%-22s", v.c_str());
    out << buf;
    for (auto n : grid.ns) {
      for (auto m : grid.ms) {
        const auto s = summary(v, n, m);
        std::snprintf(buf, sizeof buf, "  %6.2f +- %5.2f", s.mean, s.stddev);
        out << buf;
      }
    }
    const auto s = subset_summary(v);
    std::snprintf(buf, sizeof buf, "  %6.2f +- %5.2f", s.mean, s.stddev);
    out << buf << '\n';
  }
  return out.str();
}

nlohmann::json AblationResult::to_json() const {
  nlohmann::json j;
  j["variants"] = variants;
  auto& rs = j["runs"] = nlohmann::json::array();
  for (const auto& r : runs) {
    rs.push_back({{"variant", r.variant},
                  {"seed", r.seed},
                  {"recall", r.test.to_json()["recall"]},
                  {"motion_confusable_r1_iou05", r.motion_confusable_r1},
                  {"subset_size", r.subset_size},
                  {"best_epoch", r.best_epoch},
                  {"parameters", r.parameters},
                  {"seconds", r.seconds}});
  }
  return j;
}

AblationResult run_ablation(const AblationSetup& setup, std::ostream* log) {
  AblationResult result;
  result.variants = setup.variants;
  for (std::size_t si = 0; si < setup.seeds; ++si) {
    const auto seed = setup.first_seed + si;
    const auto train_g = generate_split(setup.base.data, derive_seed(seed, "data/train"), setup.train_count);
    const auto val_g = generate_split(setup.base.data, derive_seed(seed, "data/val"), setup.val_count);
    const auto test_g = generate_split(setup.base.data, derive_seed(seed, "data/test"), setup.test_count);
    const auto train_s = samples_of(train_g), val_s = samples_of(val_g), test_s = samples_of(test_g);
    std::vector<GroundingSample> subset;
    for (const auto& g : test_g) {
      if (g.script.motion_confusable && !g.script.appearance_confusable) subset.push_back(g.sample);
    }

    for (const auto& name : setup.variants) {
      const auto start = std::chrono::steady_clock::now();
      RunConfig cfg = setup.base;
      cfg.flags = variant_flags(name);
      cfg.train.seed = seed;
      auto trained = train(cfg, train_s, val_s);
      auto model = trained.best.build();
      AblationRun run;
      run.variant = name;
      run.seed = seed;
      run.test = model.evaluate(test_s);
      if (!subset.empty()) {
        std::vector<std::vector<ScoredSegment>> preds;
        std::vector<Segment> gts;
        for (const auto& s : subset) {
          preds.push_back(model.predict(s, 1));
          gts.push_back(s.gt);
        }
        run.motion_confusable_r1 = recall_at(1, 0.5, preds, gts);
      }
      run.subset_size = subset.size();
      run.best_epoch = trained.best_epoch;
      run.parameters = model.params().scalar_count();
      run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (log) {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "seed %llu  %-22s R@1,IoU=0.5 %6.2f  motion-confusable %6.2f (n=%zu)  "
                      "best epoch %zu  %.1fs\n",
                      static_cast<unsigned long long>(seed), name.c_str(), run.test.at(1, 0.5),
                      run.motion_confusable_r1, run.subset_size, run.best_epoch, run.seconds);
        *log << buf << std::flush;
      }
      result.runs.push_back(std::move(run));
    }
  }
  return result;
}

}  // namespace marn
