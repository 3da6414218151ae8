#pragma once

// Synthetic grounding scenes. Objects carry a static identity class (the
// appearance channel) and take part in scripted action events (the motion
// channel). Distractors are built so that one channel alone is ambiguous:
//
//  * motion-confusable: a second object of the target's class performs a
//    different action, so appearance cannot tell which event is meant;
//  * appearance-confusable: an object of another class performs the target
//    action, so motion cannot tell which event is meant.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "marn/params.hpp"
#include "marn/segment.hpp"
#include "marn/tensor.hpp"

namespace marn {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GeneratorConfig {
  std::size_t frames = 32;       // T
  std::size_t objects = 4;       // K
  std::size_t feature_dim = 32;  // D_in
  std::size_t filler_tokens = 0;
  std::size_t object_classes = 6;
  std::size_t action_classes = 6;
  double appearance_noise = 0.15;
  double motion_noise = 0.3;
  double global_noise = 0.1;
  double box_jitter = 0.005;
  std::size_t min_event_frames = 4;
  std::size_t max_event_frames = 10;
  double motion_confusable_rate = 0.0;
  double appearance_confusable_rate = 0.0;
  std::size_t background_events = 1;
  std::uint64_t world_seed = 2022;

  std::size_t query_length() const { return 2 + filler_tokens; }
  void validate() const;
};

enum class Trajectory : std::uint8_t { kBump = 0, kOscillate = 1, kGrow = 2 };

struct Event {
  std::size_t slot = 0;
  std::size_t action = 0;
  std::size_t start = 0;  // first frame
  std::size_t end = 0;    // one past the last frame
  Trajectory trajectory = Trajectory::kBump;
};

struct SceneScript {
  std::vector<std::size_t> object_class;  // per object slot
  std::vector<Event> events;              // at most one event per slot
  std::size_t target = 0;                 // index into events
  bool motion_confusable = false;
  bool appearance_confusable = false;

  const Event& target_event() const { return events.at(target); }
  std::size_t target_class() const { return object_class.at(target_event().slot); }
};

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(const GeneratorConfig& config);

  std::size_t size() const { return words_.size(); }
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::size_t filler(std::size_t i) const { return i; }
  std::size_t action(std::size_t a) const { return fillers_ + a; }
  std::size_t object(std::size_t o) const { return fillers_ + actions_ + o; }
  // "<action> <object>" with the configured filler tokens around it.
  std::vector<std::uint32_t> query(std::size_t action, std::size_t object,
                                   std::size_t filler_tokens) const;

 private:
  std::size_t fillers_ = 0;
  std::size_t actions_ = 0;
  std::vector<std::string> words_;
};

// Fixed class embeddings shared by every sample of a configuration.
class World {
 public:
  explicit World(const GeneratorConfig& config);

  std::span<const double> object_embedding(std::size_t c) const;
  std::span<const double> action_embedding(std::size_t a) const;
  std::span<const double> rest_embedding() const;
  const Vocabulary& vocabulary() const { return vocab_; }
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_;
  std::vector<std::vector<double>> objects_;
  std::vector<std::vector<double>> motions_;  // actions, then rest
  Vocabulary vocab_;
};

struct GroundingSample {
  std::uint64_t id = 0;
  std::size_t frames = 0;
  std::size_t objects = 0;
  std::size_t feature_dim = 0;
  Tensor appearance_local;   // [T x K x D_in]
  Tensor motion_local;       // [T x K x D_in]
  Tensor appearance_global;  // [T x D_in]
  Tensor motion_global;      // [T x D_in]
  Tensor boxes;              // [T x K x 4], (cx, cy, w, h)
  std::vector<std::uint32_t> query_ids;
  Segment gt;

  std::size_t query_length() const { return query_ids.size(); }
};

// Bitwise equality of every field.
bool same_sample(const GroundingSample& a, const GroundingSample& b);

// Throws GenerationError when a sample breaks its invariants.
void validate_sample(const GroundingSample& sample);

struct GeneratedSample {
  GroundingSample sample;
  SceneScript script;
};

SceneScript draw_script(const GeneratorConfig& config, Rng& rng);
GroundingSample render_scene(const GeneratorConfig& config, const World& world,
                             const SceneScript& script, Rng& rng, std::uint64_t id);

GeneratedSample generate_scene(const GeneratorConfig& config, std::uint64_t seed);
GroundingSample generate_sample(const GeneratorConfig& config, std::uint64_t seed);
// `count` samples with ids 0..count-1, each from its own derived seed.
std::vector<GeneratedSample> generate_split(const GeneratorConfig& config, std::uint64_t seed,
                                            std::size_t count);
std::vector<GroundingSample> samples_of(std::span<const GeneratedSample> generated);

// Binary dataset: "MGDS", u32 version, u64 count, then per sample
// u64 id, u32 T, K, N, D_in, f64 gt start/end, u32 query ids, f64 blocks
// (appearance_local, motion_local, appearance_global, motion_global, boxes),
// u32 CRC32 of the record. Little-endian throughout.
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 4 + 4 + 8;
std::size_t dataset_record_bytes(std::size_t frames, std::size_t objects, std::size_t query_len,
                                 std::size_t feature_dim);

void write_dataset(const std::filesystem::path& path, std::span<const GroundingSample> samples);
std::vector<GroundingSample> read_dataset(const std::filesystem::path& path);
// One JSON object per line: id, dims, gt_segment, query tokens.
void write_manifest(const std::filesystem::path& path, std::span<const GroundingSample> samples,
                    const Vocabulary& vocab);

}  // namespace marn
