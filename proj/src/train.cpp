#include "marn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "marn/ops.hpp"

namespace marn {

nlohmann::json EpochRecord::to_json() const {
  nlohmann::json j = {{"epoch", epoch},
                      {"lr", lr},
                      {"loss", loss},
                      {"iou_loss", iou_loss},
                      {"boundary_loss", boundary_loss},
                      {"mean_grad_norm", mean_grad_norm},
                      {"clipped_steps", clipped_steps},
                      {"improved", improved}};
  j["val_r1_iou05"] = val_metric ? nlohmann::json(*val_metric) : nlohmann::json(nullptr);
  return j;
}

double decayed_lr(double base, std::size_t epoch, std::size_t epochs) {
  return base * static_cast<double>(epochs - std::min(epoch, epochs)) / static_cast<double>(epochs);
}

namespace {

double validation_metric(const Model& model, std::span<const GroundingSample> val) {
  std::vector<std::vector<ScoredSegment>> preds;
  std::vector<Segment> gts;
  for (const auto& s : val) {
    preds.push_back(model.predict(s, 1));
    gts.push_back(s.gt);
  }
  return recall_at(1, 0.5, preds, gts);
}

}  // namespace

TrainResult train(Model& model, std::span<const GroundingSample> train_set,
                  std::span<const GroundingSample> val_set, const TrainHooks& hooks) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training split");
  const auto& cfg = model.config();
  auto& params = model.params();
  AdamState state = AdamState::create(params, cfg.optimizer);
  Rng shuffle(derive_seed(cfg.train.seed, "shuffle"));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  std::size_t stale = 0;
  bool have_best = false;
  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle.engine());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = decayed_lr(cfg.optimizer.lr, epoch, cfg.train.epochs);
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.train.batch_size) {
      const auto end = std::min(order.size(), begin + cfg.train.batch_size);
      const double inv = 1.0 / static_cast<double>(end - begin);
      params.zero_grad();
      for (std::size_t i = begin; i < end; ++i) {
        const auto& sample = train_set[order[i]];
        const auto out = model.forward(sample);
        const auto terms = model.loss(out, sample);
        const double value = terms.total.item();
        if (!std::isfinite(value)) {
          throw NumericError("non-finite loss on sample " + std::to_string(sample.id));
        }
        rec.loss += value;
        rec.iou_loss += terms.iou.item();
        rec.boundary_loss += terms.boundary.item();
        scale(terms.total, inv).backward();
      }
      const auto report = adam_step(params, state, rec.lr);
      rec.mean_grad_norm += report.grad_norm;
      rec.clipped_steps += report.clip_scale < 1.0;
      ++steps;
    }
    const double n = static_cast<double>(train_set.size());
    rec.loss /= n;
    rec.iou_loss /= n;
    rec.boundary_loss /= n;
    rec.mean_grad_norm /= static_cast<double>(steps);

    if (!val_set.empty()) {
      rec.val_metric = validation_metric(model, val_set);
      if (!have_best || *rec.val_metric > result.best_metric) {
        rec.improved = true;
        have_best = true;
        stale = 0;
        result.best_metric = *rec.val_metric;
        result.best_epoch = epoch;
        result.best = Checkpoint::capture(model, state, {epoch, result.best_metric});
      } else {
        ++stale;
      }
    }
    result.trace.push_back(rec);
    if (hooks.trace) *hooks.trace << rec.to_json().dump() << '\n' << std::flush;
    if (hooks.on_epoch && !hooks.on_epoch(rec, model)) break;
    if (!val_set.empty() && cfg.train.patience > 0 && stale >= cfg.train.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (!have_best) {
    result.best_epoch = result.trace.back().epoch;
    result.best = Checkpoint::capture(model, state, {result.best_epoch, 0.0});
  }
  return result;
}

TrainResult train(const RunConfig& config, std::span<const GroundingSample> train_set,
                  std::span<const GroundingSample> val_set, const TrainHooks& hooks) {
  Model model(config);
  return train(model, train_set, val_set, hooks);
}

}  // namespace marn
