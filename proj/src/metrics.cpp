#include "marn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace marn {

namespace {

double best_iou(const std::vector<ScoredSegment>& ranked, std::size_t n, const Segment& gt) {
  double best = 0.0;
  for (std::size_t i = 0; i < std::min(n, ranked.size()); ++i) {
    best = std::max(best, iou(ranked[i].segment, gt));
  }
  return best;
}

}  // namespace

double recall_at(std::size_t n, double m, std::span<const std::vector<ScoredSegment>> predictions,
                 std::span<const Segment> gts) {
  if (predictions.empty()) throw std::invalid_argument("recall_at: empty split");
  if (predictions.size() != gts.size()) {
    throw std::invalid_argument("recall_at: prediction and ground-truth counts differ");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& ranked = predictions[i];
    const auto top = std::min(n, ranked.size());
    hits += std::any_of(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(top),
                        [&](const ScoredSegment& s) { return iou(s.segment, gts[i]) > m; });
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

EvalReport make_report(const EvalGrid& grid, std::span<const std::vector<ScoredSegment>> predictions,
                       std::span<const Segment> gts, std::span<const std::uint64_t> ids) {
  if (ids.size() != gts.size()) throw std::invalid_argument("make_report: id count mismatch");
  EvalReport r;
  r.grid = grid;
  for (auto n : grid.ns) {
    auto& row = r.recall.emplace_back();
    for (auto m : grid.ms) row.push_back(recall_at(n, m, predictions, gts));
  }
  const auto widest = *std::max_element(grid.ns.begin(), grid.ns.end());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    r.samples.push_back({ids[i], best_iou(predictions[i], 1, gts[i]),
                         best_iou(predictions[i], widest, gts[i])});
  }
  return r;
}

double EvalReport::at(std::size_t n, double m) const {
  for (std::size_t i = 0; i < grid.ns.size(); ++i) {
    for (std::size_t j = 0; j < grid.ms.size(); ++j) {
      if (grid.ns[i] == n && std::abs(grid.ms[j] - m) < 1e-12) return recall[i][j];
    }
  }
  throw std::out_of_range("report has no entry R@" + std::to_string(n) + ", IoU=" + std::to_string(m));
}

bool EvalReport::monotone() const {
  for (std::size_t i = 0; i < grid.ns.size(); ++i) {
    for (std::size_t j = 0; j < grid.ms.size(); ++j) {
      const double v = recall[i][j];
      if (v < 0.0 || v > 100.0) return false;
      for (std::size_t a = 0; a < grid.ns.size(); ++a) {
        if (grid.ns[a] > grid.ns[i] && recall[a][j] < v) return false;
      }
      for (std::size_t b = 0; b < grid.ms.size(); ++b) {
        if (grid.ms[b] > grid.ms[j] && recall[i][b] > v) return false;
      }
    }
  }
  return true;
}

std::string EvalReport::table() const {
  std::ostringstream out;
  char buf[64];
  out << "metric          ";
  for (auto m : grid.ms) {
    std::snprintf(buf, sizeof buf, "  IoU=%.1f", m);
    out << buf;
  }
  out << '\n';
  for (std::size_t i = 0; i < grid.ns.size(); ++i) {
    std::snprintf(buf, sizeof buf, "R@%-14zu", grid.ns[i]);
    out << buf;
    for (double v : recall[i]) {
      std::snprintf(buf, sizeof buf, "  %7.2f", v);
      out << buf;
    }
    out << '\n';
  }
  out << "samples: " << count() << '\n';
  return out.str();
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["samples"] = count();
  auto& grid_json = j["recall"] = nlohmann::json::object();
  for (std::size_t i = 0; i < grid.ns.size(); ++i) {
    for (std::size_t j2 = 0; j2 < grid.ms.size(); ++j2) {
      char key[48];
      std::snprintf(key, sizeof key, "R@%zu,IoU=%.1f", grid.ns[i], grid.ms[j2]);
      grid_json[key] = recall[i][j2];
    }
  }
  auto& recs = j["per_sample"] = nlohmann::json::array();
  for (const auto& s : samples) {
    recs.push_back({{"id", s.id}, {"best_iou_top1", s.best_iou_top1}, {"best_iou_topn", s.best_iou_topn}});
  }
  return j;
}

}  // namespace marn
