#pragma once

// "R@n, IoU=m": share of samples whose top-n decoded segments contain one with
// IoU strictly greater than m against the ground truth.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "marn/head.hpp"
#include "marn/segment.hpp"

namespace marn {

// Percentage in [0, 100]. Each entry of `predictions` is a ranked list.
double recall_at(std::size_t n, double m, std::span<const std::vector<ScoredSegment>> predictions,
                 std::span<const Segment> gts);

struct EvalGrid {
  std::vector<std::size_t> ns = {1, 5};
  std::vector<double> ms = {0.3, 0.5, 0.7};
};

struct SampleRecord {
  std::uint64_t id = 0;
  double best_iou_top1 = 0.0;
  double best_iou_topn = 0.0;  // over the largest n of the grid
};

struct EvalReport {
  EvalGrid grid;
  std::vector<std::vector<double>> recall;  // [n index][m index]
  std::vector<SampleRecord> samples;

  double at(std::size_t n, double m) const;
  std::size_t count() const { return samples.size(); }
  // Recall grows with n and does not grow with m.
  bool monotone() const;
  std::string table() const;
  nlohmann::json to_json() const;
};

// Fills the grid from already-decoded predictions (each list holds at least
// max(ns) entries when available).
EvalReport make_report(const EvalGrid& grid, std::span<const std::vector<ScoredSegment>> predictions,
                       std::span<const Segment> gts, std::span<const std::uint64_t> ids);

}  // namespace marn
