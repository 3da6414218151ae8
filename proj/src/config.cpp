#include "marn/config.hpp"

#include <fstream>
#include <set>

namespace marn {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  // Calls fn(Reader&) on a nested object when present.
  template <class Fn>
  void nested(const char* key, Fn fn) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Reader r(j_.at(key), where_ + "." + key);
    fn(r);
    r.finish();
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key \"" + k + "\"");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

void VariantFlags::validate() const {
  if (motion_branch && !motion_encoder) {
    throw ConfigError("variant: motion_branch requires motion_encoder");
  }
  if (maa && !motion_encoder) throw ConfigError("variant: maa requires motion_encoder");
  if (!maa && (maa_motion_guided || maa_appearance_fused)) {
    throw ConfigError("variant: maa switches require maa");
  }
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {
      "baseline", "+AB", "+AB+ME", "+AB+ME+MB", "maa-none", "maa-motion-guided",
      "maa-appearance-fused", "full"};
  return names;
}

VariantFlags variant_flags(const std::string& name) {
  VariantFlags f{false, false, false, false, false, false};
  if (name == "baseline") return f;
  f.appearance_branch = true;
  if (name == "+AB") return f;
  f.motion_encoder = true;
  if (name == "+AB+ME") return f;
  f.motion_branch = true;
  if (name == "+AB+ME+MB") return f;
  f.maa = true;
  if (name == "maa-none") return f;
  if (name == "maa-motion-guided") {
    f.maa_motion_guided = true;
    return f;
  }
  if (name == "maa-appearance-fused") {
    f.maa_appearance_fused = true;
    return f;
  }
  if (name == "full") {
    f.maa_motion_guided = f.maa_appearance_fused = true;
    return f;
  }
  throw ConfigError("unknown variant \"" + name + "\"");
}

std::size_t RunConfig::vocab_size() const { return Vocabulary(data).size(); }

void RunConfig::validate() const {
  try {
    data.validate();
  } catch (const GenerationError& e) {
    throw ConfigError(e.what());
  }
  flags.validate();
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string(what) + " must be positive");
  };
  positive(dims.model_dim, "model_dim");
  positive(dims.heads, "heads");
  positive(dims.graph_layers, "graph_layers");
  positive(dims.head_layers, "head_layers");
  positive(proposal_stride, "proposal_stride");
  positive(train.epochs, "epochs");
  positive(train.batch_size, "batch_size");
  if (dims.model_dim % 2 != 0) throw ConfigError("model_dim must be even");
  if (dims.model_dim % dims.heads != 0) throw ConfigError("heads must divide model_dim");
  if (proposal_sizes.empty()) throw ConfigError("proposal_sizes must not be empty");
  for (auto s : proposal_sizes) {
    if (s == 0 || s > data.frames) throw ConfigError("proposal size outside [1, frames]");
  }
  if (!(loss.positive_threshold > 0.0 && loss.positive_threshold < 1.0)) {
    throw ConfigError("lambda must lie in (0, 1)");
  }
  if (loss.boundary_weight < 0.0) throw ConfigError("alpha must be non-negative");
  if (!(optimizer.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (grid.ns.empty() || grid.ms.empty()) throw ConfigError("evaluation grid must not be empty");
}

json to_json(const RunConfig& c) {
  const auto& d = c.data;
  return {
      {"data",
       {{"frames", d.frames}, {"objects", d.objects}, {"feature_dim", d.feature_dim},
        {"filler_tokens", d.filler_tokens}, {"object_classes", d.object_classes},
        {"action_classes", d.action_classes}, {"appearance_noise", d.appearance_noise},
        {"motion_noise", d.motion_noise}, {"global_noise", d.global_noise},
        {"box_jitter", d.box_jitter}, {"min_event_frames", d.min_event_frames},
        {"max_event_frames", d.max_event_frames},
        {"motion_confusable_rate", d.motion_confusable_rate},
        {"appearance_confusable_rate", d.appearance_confusable_rate},
        {"background_events", d.background_events}, {"world_seed", d.world_seed}}},
      {"model",
       {{"model_dim", c.dims.model_dim}, {"attention_dim", c.dims.attention_dim},
        {"affinity_dim", c.dims.affinity_dim}, {"heads", c.dims.heads},
        {"graph_layers", c.dims.graph_layers}, {"scale_affinity", c.dims.scale_affinity},
        {"head_hidden", c.dims.head_hidden}, {"head_layers", c.dims.head_layers}}},
      {"proposals", {{"sizes", c.proposal_sizes}, {"stride", c.proposal_stride}}},
      {"loss", {{"lambda", c.loss.positive_threshold}, {"alpha", c.loss.boundary_weight}}},
      {"optimizer",
       {{"lr", c.optimizer.lr}, {"beta1", c.optimizer.beta1}, {"beta2", c.optimizer.beta2},
        {"eps", c.optimizer.eps}, {"clip_norm", c.optimizer.clip_norm}}},
      {"train",
       {{"epochs", c.train.epochs}, {"batch_size", c.train.batch_size},
        {"patience", c.train.patience}, {"seed", c.train.seed}}},
      {"flags",
       {{"appearance_branch", c.flags.appearance_branch},
        {"motion_encoder", c.flags.motion_encoder}, {"motion_branch", c.flags.motion_branch},
        {"maa", c.flags.maa}, {"maa_motion_guided", c.flags.maa_motion_guided},
        {"maa_appearance_fused", c.flags.maa_appearance_fused}}},
      {"eval", {{"nms_threshold", c.nms_threshold}, {"ns", c.grid.ns}, {"ms", c.grid.ms}}},
      {"paths", {{"train", c.paths.train}, {"val", c.paths.val}, {"test", c.paths.test}}},
  };
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Reader root(j, "config");
  root.nested("data", [&](Reader& r) {
    auto& d = c.data;
    r.get("frames", d.frames);
    r.get("objects", d.objects);
    r.get("feature_dim", d.feature_dim);
    r.get("filler_tokens", d.filler_tokens);
    r.get("object_classes", d.object_classes);
    r.get("action_classes", d.action_classes);
    r.get("appearance_noise", d.appearance_noise);
    r.get("motion_noise", d.motion_noise);
    r.get("global_noise", d.global_noise);
    r.get("box_jitter", d.box_jitter);
    r.get("min_event_frames", d.min_event_frames);
    r.get("max_event_frames", d.max_event_frames);
    r.get("motion_confusable_rate", d.motion_confusable_rate);
    r.get("appearance_confusable_rate", d.appearance_confusable_rate);
    r.get("background_events", d.background_events);
    r.get("world_seed", d.world_seed);
  });
  root.nested("model", [&](Reader& r) {
    r.get("model_dim", c.dims.model_dim);
    r.get("attention_dim", c.dims.attention_dim);
    r.get("affinity_dim", c.dims.affinity_dim);
    r.get("heads", c.dims.heads);
    r.get("graph_layers", c.dims.graph_layers);
    r.get("scale_affinity", c.dims.scale_affinity);
    r.get("head_hidden", c.dims.head_hidden);
    r.get("head_layers", c.dims.head_layers);
  });
  root.nested("proposals", [&](Reader& r) {
    r.get("sizes", c.proposal_sizes);
    r.get("stride", c.proposal_stride);
  });
  root.nested("loss", [&](Reader& r) {
    r.get("lambda", c.loss.positive_threshold);
    r.get("alpha", c.loss.boundary_weight);
  });
  root.nested("optimizer", [&](Reader& r) {
    r.get("lr", c.optimizer.lr);
    r.get("beta1", c.optimizer.beta1);
    r.get("beta2", c.optimizer.beta2);
    r.get("eps", c.optimizer.eps);
    r.get("clip_norm", c.optimizer.clip_norm);
  });
  root.nested("train", [&](Reader& r) {
    r.get("epochs", c.train.epochs);
    r.get("batch_size", c.train.batch_size);
    r.get("patience", c.train.patience);
    r.get("seed", c.train.seed);
  });
  root.nested("flags", [&](Reader& r) {
    r.get("appearance_branch", c.flags.appearance_branch);
    r.get("motion_encoder", c.flags.motion_encoder);
    r.get("motion_branch", c.flags.motion_branch);
    r.get("maa", c.flags.maa);
    r.get("maa_motion_guided", c.flags.maa_motion_guided);
    r.get("maa_appearance_fused", c.flags.maa_appearance_fused);
  });
  root.nested("eval", [&](Reader& r) {
    r.get("nms_threshold", c.nms_threshold);
    r.get("ns", c.grid.ns);
    r.get("ms", c.grid.ms);
  });
  root.nested("paths", [&](Reader& r) {
    r.get("train", c.paths.train);
    r.get("val", c.paths.val);
    r.get("test", c.paths.test);
  });
  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace marn
