#include "marn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

#include "binary_io.hpp"
#include "json.hpp"

namespace marn {

namespace {

const std::vector<std::string> kFillerWords = {"person", "the", "then", "again"};
const std::vector<std::string> kActionWords = {"open", "close", "pick", "put",  "turn", "push",
                                               "pull", "wave",  "lift", "drop", "hold", "shake"};
const std::vector<std::string> kObjectWords = {"door", "box",   "cup",    "laptop", "book",  "bag",
                                               "phone", "chair", "window", "bottle", "towel", "shoe"};

std::string class_word(const std::vector<std::string>& names, const char* prefix, std::size_t i) {
  return i < names.size() ? names[i] : prefix + std::to_string(i);
}

// `count` vectors of norm sqrt(dim); mutually orthogonal when count <= dim.
std::vector<std::vector<double>> class_embeddings(std::size_t count, std::size_t dim, Rng& rng) {
  std::vector<std::vector<double>> out;
  for (std::size_t c = 0; c < count; ++c) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal(0.0, 1.0);
    if (count <= dim) {
      for (const auto& prev : out) {
        const double proj = std::inner_product(v.begin(), v.end(), prev.begin(), 0.0) /
                            static_cast<double>(dim);
        for (std::size_t j = 0; j < dim; ++j) v[j] -= proj * prev[j];
      }
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    const double target = std::sqrt(static_cast<double>(dim));
    for (auto& x : v) x *= target / norm;
    out.push_back(std::move(v));
  }
  return out;
}

std::size_t draw_other(Rng& rng, std::size_t count, std::size_t excluded) {
  const auto r = rng.index(count - 1);
  return r >= excluded ? r + 1 : r;
}

std::size_t draw_length(const GeneratorConfig& c, Rng& rng) {
  return c.min_event_frames + rng.index(c.max_event_frames - c.min_event_frames + 1);
}

Trajectory draw_trajectory(Rng& rng) { return static_cast<Trajectory>(rng.index(3)); }

void check_script(const GeneratorConfig& c, const SceneScript& s) {
  if (s.object_class.size() != c.objects) {
    throw GenerationError("script has " + std::to_string(s.object_class.size()) +
                          " object slots, config expects " + std::to_string(c.objects));
  }
  for (auto cls : s.object_class) {
    if (cls >= c.object_classes) throw GenerationError("object class out of range");
  }
  if (s.target >= s.events.size()) throw GenerationError("script has no target event");
  std::vector<bool> used(c.objects, false);
  for (const auto& e : s.events) {
    if (e.slot >= c.objects) throw GenerationError("event slot out of range");
    if (used[e.slot]) throw GenerationError("two events on one object slot");
    used[e.slot] = true;
    if (e.action >= c.action_classes) throw GenerationError("action class out of range");
    if (e.start >= e.end || e.end > c.frames) {
      throw GenerationError("infeasible event [" + std::to_string(e.start) + ", " +
                            std::to_string(e.end) + ") for " + std::to_string(c.frames) +
                            " frames");
    }
  }
}

}  // namespace

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& m) { throw GenerationError("invalid generator config: " + m); };
  if (frames < 4) fail("frames must be >= 4");
  if (objects < 2) fail("objects must be >= 2");
  if (feature_dim == 0) fail("feature_dim must be positive");
  if (object_classes < 2 || action_classes < 2) fail("need at least two object and action classes");
  if (min_event_frames == 0 || min_event_frames > max_event_frames) fail("bad event length range");
  if (max_event_frames > frames) fail("events longer than the video");
  if (motion_confusable_rate < 0 || motion_confusable_rate > 1 || appearance_confusable_rate < 0 ||
      appearance_confusable_rate > 1) {
    fail("distractor rates must lie in [0, 1]");
  }
  if (motion_confusable_rate > 0 && appearance_confusable_rate > 0 && objects < 3) {
    fail("both distractor kinds need at least three objects");
  }
  if (appearance_noise < 0 || motion_noise < 0 || global_noise < 0 || box_jitter < 0) {
    fail("noise levels must be non-negative");
  }
}

Vocabulary::Vocabulary(const GeneratorConfig& config)
    : fillers_(std::max(kFillerWords.size(), config.filler_tokens)),
      actions_(config.action_classes) {
  for (std::size_t i = 0; i < fillers_; ++i) words_.push_back(class_word(kFillerWords, "filler", i));
  for (std::size_t a = 0; a < actions_; ++a) words_.push_back(class_word(kActionWords, "action", a));
  for (std::size_t o = 0; o < config.object_classes; ++o) {
    words_.push_back(class_word(kObjectWords, "object", o));
  }
}

std::vector<std::uint32_t> Vocabulary::query(std::size_t action_id, std::size_t object_id,
                                             std::size_t filler_tokens) const {
  std::vector<std::uint32_t> q;
  auto push = [&](std::size_t id) { q.push_back(static_cast<std::uint32_t>(id)); };
  if (filler_tokens >= 1) push(filler(0));
  push(action(action_id));
  if (filler_tokens >= 2) push(filler(1));
  push(object(object_id));
  for (std::size_t f = 2; f < filler_tokens; ++f) push(filler(f));
  return q;
}

World::World(const GeneratorConfig& config) : dim_(config.feature_dim), vocab_(config) {
  Rng obj_rng(derive_seed(config.world_seed, "world/objects"));
  objects_ = class_embeddings(config.object_classes, dim_, obj_rng);
  Rng motion_rng(derive_seed(config.world_seed, "world/motions"));
  motions_ = class_embeddings(config.action_classes + 1, dim_, motion_rng);
}

std::span<const double> World::object_embedding(std::size_t c) const { return objects_.at(c); }
std::span<const double> World::action_embedding(std::size_t a) const {
  if (a + 1 >= motions_.size()) throw std::out_of_range("action class out of range");
  return motions_[a];
}
std::span<const double> World::rest_embedding() const { return motions_.back(); }

bool same_sample(const GroundingSample& a, const GroundingSample& b) {
  auto same = [](const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape()) return false;
    return std::memcmp(x.values().data(), y.values().data(), x.numel() * sizeof(double)) == 0;
  };
  return a.id == b.id && a.frames == b.frames && a.objects == b.objects &&
         a.feature_dim == b.feature_dim && a.query_ids == b.query_ids &&
         std::memcmp(&a.gt.start, &b.gt.start, sizeof(double)) == 0 &&
         std::memcmp(&a.gt.end, &b.gt.end, sizeof(double)) == 0 &&
         same(a.appearance_local, b.appearance_local) && same(a.motion_local, b.motion_local) &&
         same(a.appearance_global, b.appearance_global) &&
         same(a.motion_global, b.motion_global) && same(a.boxes, b.boxes);
}

void validate_sample(const GroundingSample& s) {
  const auto T = s.frames, K = s.objects, D = s.feature_dim;
  auto fail = [&](const std::string& m) {
    throw GenerationError("sample " + std::to_string(s.id) + ": " + m);
  };
  if (T == 0 || K == 0 || D == 0 || s.query_ids.empty()) fail("empty dimension");
  if (s.appearance_local.shape() != Shape{T, K, D} || s.motion_local.shape() != Shape{T, K, D}) {
    fail("local feature shape mismatch");
  }
  if (s.appearance_global.shape() != Shape{T, D} || s.motion_global.shape() != Shape{T, D}) {
    fail("global feature shape mismatch");
  }
  if (s.boxes.shape() != Shape{T, K, 4}) fail("box shape mismatch");
  if (!(0.0 <= s.gt.start && s.gt.start < s.gt.end && s.gt.end <= 1.0)) fail("bad gt segment");
  auto b = s.boxes.values();
  for (std::size_t i = 0; i < b.size(); i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (!(b[i + j] >= 0.0 && b[i + j] <= 1.0)) fail("box coordinate outside [0, 1]");
    }
    if (b[i + 2] <= 0.0 || b[i + 3] <= 0.0) fail("box with non-positive extent");
  }
  for (const Tensor* t : {&s.appearance_local, &s.motion_local, &s.appearance_global,
                          &s.motion_global}) {
    for (double v : t->values()) {
      if (!std::isfinite(v)) fail("non-finite feature");
    }
  }
}

SceneScript draw_script(const GeneratorConfig& c, Rng& rng) {
  c.validate();
  const auto K = c.objects;
  SceneScript s;
  s.motion_confusable = rng.bernoulli(c.motion_confusable_rate);
  s.appearance_confusable = rng.bernoulli(c.appearance_confusable_rate);

  std::vector<std::size_t> slots(K);
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng.engine());

  const std::size_t target_class = rng.index(c.object_classes);
  const std::size_t target_action = rng.index(c.action_classes);
  s.object_class.assign(K, 0);
  std::size_t next_slot = 0;

  std::vector<std::size_t> lengths;
  auto key_event = [&](std::size_t cls, std::size_t action) {
    const auto slot = slots[next_slot++];
    s.object_class[slot] = cls;
    lengths.push_back(draw_length(c, rng));
    s.events.push_back({slot, action, 0, 0, draw_trajectory(rng)});
  };
  key_event(target_class, target_action);
  if (s.motion_confusable) key_event(target_class, draw_other(rng, c.action_classes, target_action));
  if (s.appearance_confusable) key_event(draw_other(rng, c.object_classes, target_class), target_action);

  // Key events never overlap, so the target is the only interval matching
  // both words of the query.
  const std::size_t key_count = s.events.size();
  const std::size_t busy = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
  if (busy > c.frames) {
    throw GenerationError("infeasible script: " + std::to_string(busy) +
                          " event frames do not fit in " + std::to_string(c.frames));
  }
  const std::size_t slack = c.frames - busy;
  std::vector<std::size_t> cuts(key_count);
  for (auto& cut : cuts) cut = rng.index(slack + 1);
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::size_t> order(key_count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::size_t cursor = 0, prev_cut = 0;
  for (std::size_t i = 0; i < key_count; ++i) {
    auto& e = s.events[order[i]];
    cursor += cuts[i] - prev_cut;
    prev_cut = cuts[i];
    e.start = cursor;
    e.end = cursor + lengths[order[i]];
    cursor = e.end;
  }

  std::size_t background = 0;
  for (std::size_t i = next_slot; i < K; ++i) {
    const auto slot = slots[i];
    s.object_class[slot] = draw_other(rng, c.object_classes, target_class);
    if (background < c.background_events) {
      const auto len = draw_length(c, rng);
      const auto start = rng.index(c.frames - len + 1);
      s.events.push_back({slot, draw_other(rng, c.action_classes, target_action), start,
                          start + len, draw_trajectory(rng)});
      ++background;
    }
  }
  s.target = 0;
  return s;
}

GroundingSample render_scene(const GeneratorConfig& c, const World& world,
                             const SceneScript& script, Rng& rng, std::uint64_t id) {
  c.validate();
  check_script(c, script);
  const auto T = c.frames, K = c.objects, D = c.feature_dim;

  GroundingSample s;
  s.id = id;
  s.frames = T;
  s.objects = K;
  s.feature_dim = D;

  std::vector<const Event*> event_of(K, nullptr);
  for (const auto& e : script.events) event_of[e.slot] = &e;
  auto active = [&](std::size_t k, std::size_t t) {
    const Event* e = event_of[k];
    return e && t >= e->start && t < e->end;
  };

  std::vector<double> app(T * K * D), mot(T * K * D), app_g(T * D), mot_g(T * D), boxes(T * K * 4);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      const auto obj = world.object_embedding(script.object_class[k]);
      const auto motion = active(k, t) ? world.action_embedding(event_of[k]->action)
                                       : world.rest_embedding();
      double* a = app.data() + (t * K + k) * D;
      double* m = mot.data() + (t * K + k) * D;
      for (std::size_t j = 0; j < D; ++j) {
        a[j] = obj[j] + rng.normal(0.0, c.appearance_noise);
        m[j] = motion[j] + rng.normal(0.0, c.motion_noise);
        app_g[t * D + j] += obj[j] / static_cast<double>(K);
        mot_g[t * D + j] += motion[j] / static_cast<double>(K);
      }
    }
    for (std::size_t j = 0; j < D; ++j) {
      app_g[t * D + j] += rng.normal(0.0, c.global_noise);
      mot_g[t * D + j] += rng.normal(0.0, c.global_noise);
    }
  }

  for (std::size_t k = 0; k < K; ++k) {
    const double cx = rng.uniform(0.25, 0.75), cy = rng.uniform(0.25, 0.75);
    const double w = rng.uniform(0.1, 0.3), h = rng.uniform(0.1, 0.3);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t t = 0; t < T; ++t) {
      double x = cx, y = cy, bw = w, bh = h;
      if (active(k, t)) {
        const Event& e = *event_of[k];
        const double p = (static_cast<double>(t - e.start) + 0.5) / static_cast<double>(e.end - e.start);
        switch (e.trajectory) {
          case Trajectory::kBump: {
            const double d = 0.15 * std::sin(std::numbers::pi * p);
            x += d * std::cos(angle);
            y += d * std::sin(angle);
            break;
          }
          case Trajectory::kOscillate: {
            const double d = 0.1 * std::sin(4.0 * std::numbers::pi * p);
            x += d * std::cos(angle);
            y += d * std::sin(angle);
            break;
          }
          case Trajectory::kGrow: {
            const double f = 1.0 + 0.5 * std::sin(std::numbers::pi * p);
            bw *= f;
            bh *= f;
            break;
          }
        }
      }
      x += rng.normal(0.0, c.box_jitter);
      y += rng.normal(0.0, c.box_jitter);
      double* b = boxes.data() + (t * K + k) * 4;
      b[0] = std::clamp(x, 0.0, 1.0);
      b[1] = std::clamp(y, 0.0, 1.0);
      b[2] = std::clamp(bw, 0.01, 1.0);
      b[3] = std::clamp(bh, 0.01, 1.0);
    }
  }

  s.appearance_local = Tensor({T, K, D}, std::move(app));
  s.motion_local = Tensor({T, K, D}, std::move(mot));
  s.appearance_global = Tensor({T, D}, std::move(app_g));
  s.motion_global = Tensor({T, D}, std::move(mot_g));
  s.boxes = Tensor({T, K, 4}, std::move(boxes));
  const auto& target = script.target_event();
  s.query_ids = world.vocabulary().query(target.action, script.target_class(), c.filler_tokens);
  s.gt = {static_cast<double>(target.start) / static_cast<double>(T),
          static_cast<double>(target.end) / static_cast<double>(T)};
  return s;
}

GeneratedSample generate_scene(const GeneratorConfig& config, std::uint64_t seed) {
  const World world(config);
  Rng rng(seed);
  auto script = draw_script(config, rng);
  auto sample = render_scene(config, world, script, rng, seed);
  return {std::move(sample), std::move(script)};
}

GroundingSample generate_sample(const GeneratorConfig& config, std::uint64_t seed) {
  return generate_scene(config, seed).sample;
}

std::vector<GeneratedSample> generate_split(const GeneratorConfig& config, std::uint64_t seed,
                                            std::size_t count) {
  const World world(config);
  std::vector<GeneratedSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, "sample/" + std::to_string(i)));
    auto script = draw_script(config, rng);
    auto sample = render_scene(config, world, script, rng, i);
    out.push_back({std::move(sample), std::move(script)});
  }
  return out;
}

std::vector<GroundingSample> samples_of(std::span<const GeneratedSample> generated) {
  std::vector<GroundingSample> out;
  out.reserve(generated.size());
  for (const auto& g : generated) out.push_back(g.sample);
  return out;
}

std::size_t dataset_record_bytes(std::size_t T, std::size_t K, std::size_t N, std::size_t D) {
  return 8 + 4 * 4 + 2 * 8 + 4 * N + 8 * (2 * T * K * D + 2 * T * D + 4 * T * K) + 4;
}

void write_dataset(const std::filesystem::path& path, std::span<const GroundingSample> samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot open " + path.string() + " for writing");
  io::ByteWriter header;
  header.bytes("MGDS", 4);
  header.u32(kDatasetVersion);
  header.u64(samples.size());
  out.write(reinterpret_cast<const char*>(header.buffer().data()),
            static_cast<std::streamsize>(header.buffer().size()));
  for (const auto& s : samples) {
    validate_sample(s);
    io::ByteWriter rec;
    rec.u64(s.id);
    rec.u32(static_cast<std::uint32_t>(s.frames));
    rec.u32(static_cast<std::uint32_t>(s.objects));
    rec.u32(static_cast<std::uint32_t>(s.query_ids.size()));
    rec.u32(static_cast<std::uint32_t>(s.feature_dim));
    rec.f64(s.gt.start);
    rec.f64(s.gt.end);
    for (auto id : s.query_ids) rec.u32(id);
    rec.f64s(s.appearance_local.values());
    rec.f64s(s.motion_local.values());
    rec.f64s(s.appearance_global.values());
    rec.f64s(s.motion_global.values());
    rec.f64s(s.boxes.values());
    const auto crc = io::crc32_of(rec.buffer());
    rec.u32(crc);
    out.write(reinterpret_cast<const char*>(rec.buffer().data()),
              static_cast<std::streamsize>(rec.buffer().size()));
  }
  if (!out) throw DatasetError("write failed for " + path.string());
}

std::vector<GroundingSample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  io::ByteReader r(bytes);
  std::vector<GroundingSample> out;
  try {
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "MGDS", 4) != 0) throw DatasetError("malformed header: bad magic");
    const auto version = r.u32();
    if (version != kDatasetVersion) {
      throw DatasetError("unsupported dataset version " + std::to_string(version));
    }
    const auto count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto record_start = r.position();
      const auto fail = [&](const std::string& m) {
        return DatasetError("sample " + std::to_string(i) + ": " + m);
      };
      if (r.remaining() < 8 + 16) throw fail("truncated record, checksum mismatch");
      GroundingSample s;
      s.id = r.u64();
      s.frames = r.u32();
      s.objects = r.u32();
      const std::size_t n = r.u32();
      s.feature_dim = r.u32();
      constexpr std::size_t kMaxDim = 1u << 20;
      if (s.frames == 0 || s.objects == 0 || n == 0 || s.feature_dim == 0 || s.frames > kMaxDim ||
          s.objects > kMaxDim || n > kMaxDim || s.feature_dim > kMaxDim) {
        throw fail("malformed dimensions");
      }
      const auto need = dataset_record_bytes(s.frames, s.objects, n, s.feature_dim);
      if (need > bytes.size() - record_start) throw fail("truncated record, checksum mismatch");
      const auto payload = std::span<const std::uint8_t>(bytes).subspan(record_start, need - 4);
      const auto T = s.frames, K = s.objects, D = s.feature_dim;
      s.gt.start = r.f64();
      s.gt.end = r.f64();
      s.query_ids.resize(n);
      for (auto& id : s.query_ids) id = r.u32();
      auto block = [&](Shape shape) {
        std::vector<double> v(shape_numel(shape));
        r.f64s(v);
        return Tensor(std::move(shape), std::move(v));
      };
      s.appearance_local = block({T, K, D});
      s.motion_local = block({T, K, D});
      s.appearance_global = block({T, D});
      s.motion_global = block({T, D});
      s.boxes = block({T, K, 4});
      const auto stored = r.u32();
      if (stored != io::crc32_of(payload)) throw fail("checksum mismatch");
      out.push_back(std::move(s));
    }
    if (r.remaining() != 0) throw DatasetError("trailing bytes after " + std::to_string(count) + " samples");
  } catch (const std::out_of_range&) {
    throw DatasetError("truncated dataset file " + path.string() + ", checksum mismatch");
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const GroundingSample> samples,
                    const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot open " + path.string() + " for writing");
  for (const auto& s : samples) {
    nlohmann::json line;
    line["id"] = s.id;
    line["frames"] = s.frames;
    line["objects"] = s.objects;
    line["query_length"] = s.query_ids.size();
    line["feature_dim"] = s.feature_dim;
    line["gt_segment"] = {s.gt.start, s.gt.end};
    line["query_ids"] = s.query_ids;
    std::vector<std::string> words;
    for (auto id : s.query_ids) words.push_back(id < vocab.size() ? vocab.word(id) : "<unk>");
    line["query"] = words;
    out << line.dump() << '\n';
  }
  if (!out) throw DatasetError("write failed for " + path.string());
}

}  // namespace marn
