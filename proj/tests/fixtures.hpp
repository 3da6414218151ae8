#pragma once

#include "marn/config.hpp"

// Small enough for a full training run in well under a second.
inline marn::RunConfig tiny_config(const std::string& variant = "full") {
  marn::RunConfig c;
  c.data.frames = 16;
  c.data.objects = 3;
  c.data.feature_dim = 8;
  c.data.min_event_frames = 2;
  c.data.max_event_frames = 4;
  c.data.motion_confusable_rate = 0.5;
  c.data.appearance_confusable_rate = 0.5;
  c.dims.model_dim = 12;
  c.dims.heads = 2;
  c.proposal_sizes = {2, 3, 4};
  c.train.epochs = 3;
  c.train.batch_size = 4;
  c.flags = marn::variant_flags(variant);
  return c;
}
