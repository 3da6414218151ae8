#pragma once

// Minibatch training with Adam, global-norm clipping, per-epoch linear
// learning-rate decay and early stopping on validation R@1, IoU=0.5.

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "marn/checkpoint.hpp"
#include "marn/model.hpp"

namespace marn {

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;           // mean total loss over the epoch's samples
  double iou_loss = 0.0;
  double boundary_loss = 0.0;
  double mean_grad_norm = 0.0;  // before clipping
  std::size_t clipped_steps = 0;
  std::optional<double> val_metric;  // R@1, IoU=0.5 on the validation split
  bool improved = false;

  nlohmann::json to_json() const;
};

struct TrainHooks {
  // Called after every epoch; returning false stops training.
  std::function<bool(const EpochRecord&, const Model&)> on_epoch;
  std::ostream* trace = nullptr;  // JSON-lines, one record per epoch
};

struct TrainResult {
  std::vector<EpochRecord> trace;
  Checkpoint best;  // parameters of the best validation epoch (or the last)
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  bool stopped_early = false;
};

// Learning rate used during `epoch` (0-based) of `epochs`.
double decayed_lr(double base, std::size_t epoch, std::size_t epochs);

TrainResult train(const RunConfig& config, std::span<const GroundingSample> train_set,
                  std::span<const GroundingSample> val_set, const TrainHooks& hooks = {});

// Same as above but continues from an existing model (used by tests).
TrainResult train(Model& model, std::span<const GroundingSample> train_set,
                  std::span<const GroundingSample> val_set, const TrainHooks& hooks = {});

}  // namespace marn
