#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "json.hpp"
#include "marn/synth.hpp"

using namespace marn;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "marn_test_synth";
  fs::create_directories(dir);
  return dir / name;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  return dot / (na * nb);
}

std::span<const double> row(const Tensor& t, std::size_t frame, std::size_t slot) {
  const auto K = t.dim(1), D = t.dim(2);
  return t.values().subspan((frame * K + slot) * D, D);
}

std::size_t slot_of(const SceneScript& s, std::size_t event) { return s.events.at(event).slot; }

// Index of the distractor event that shares the target's object class (or
// action, when `same_class` is false).
std::size_t distractor(const SceneScript& s, bool same_class) {
  const auto& t = s.target_event();
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    if (i == s.target) continue;
    const auto& e = s.events[i];
    if (same_class && s.object_class[e.slot] == s.target_class() && e.action != t.action) return i;
    if (!same_class && e.action == t.action && s.object_class[e.slot] != s.target_class()) return i;
  }
  FAIL("no distractor event");
  return 0;
}

}  // namespace

TEST_CASE("explicit single event maps to the normalized ground truth") {
  GeneratorConfig cfg;
  cfg.frames = 32;
  cfg.objects = 2;
  World world(cfg);
  SceneScript script;
  script.object_class = {1, 3};
  script.events = {{0, 2, 8, 16, Trajectory::kBump}};
  Rng rng(5);
  auto s = render_scene(cfg, world, script, rng, 0);
  CHECK(s.gt.start == 0.25);
  CHECK(s.gt.end == 0.5);
  validate_sample(s);
}

TEST_CASE("infeasible scripts and configs are rejected") {
  GeneratorConfig cfg;
  cfg.objects = 2;
  World world(cfg);
  SceneScript script;
  script.object_class = {0, 1};
  script.events = {{0, 0, 20, 40, Trajectory::kBump}};
  Rng rng(1);
  CHECK_THROWS_AS(render_scene(cfg, world, script, rng, 0), GenerationError);

  GeneratorConfig tiny;
  tiny.frames = 3;
  CHECK_THROWS_AS(tiny.validate(), GenerationError);

  GeneratorConfig crowded;
  crowded.frames = 8;
  crowded.min_event_frames = 4;
  crowded.max_event_frames = 4;
  crowded.motion_confusable_rate = 1.0;
  crowded.appearance_confusable_rate = 1.0;
  CHECK_THROWS_AS(generate_sample(crowded, 1), GenerationError);
}

TEST_CASE("generation is deterministic per seed") {
  GeneratorConfig cfg;
  cfg.motion_confusable_rate = 0.5;
  cfg.appearance_confusable_rate = 0.5;
  CHECK(same_sample(generate_sample(cfg, 42), generate_sample(cfg, 42)));
  CHECK_FALSE(same_sample(generate_sample(cfg, 42), generate_sample(cfg, 43)));
}

TEST_CASE("motion-confusable pair: appearance alike, motion apart") {
  // Same-class rows are e + n1 and e + n2 with |e|^2 = D and per-component
  // noise 0.15, so their expected cosine is 1 / (1 + 0.15^2) ~= 0.978.
  // Distinct motion classes are orthogonal, so their cosine centres on 0.
  GeneratorConfig cfg;
  cfg.motion_confusable_rate = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto g = generate_scene(cfg, seed);
    const auto& s = g.sample;
    REQUIRE(g.script.motion_confusable);
    const auto target = slot_of(g.script, g.script.target);
    const auto other = slot_of(g.script, distractor(g.script, true));
    for (std::size_t t = 0; t < s.frames; ++t) {
      CHECK(cosine(row(s.appearance_local, t, target), row(s.appearance_local, t, other)) > 0.9);
    }
    const auto& ev = g.script.target_event();
    for (std::size_t t = ev.start; t < ev.end; ++t) {
      CHECK(cosine(row(s.motion_local, t, target), row(s.motion_local, t, other)) < 0.5);
    }
  }
}

TEST_CASE("every generated sample satisfies the sample invariants") {
  GeneratorConfig cfg;
  cfg.filler_tokens = 2;
  cfg.motion_confusable_rate = 0.5;
  cfg.appearance_confusable_rate = 0.5;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto g = generate_scene(cfg, seed);
    validate_sample(g.sample);
    CHECK(g.sample.frames == cfg.frames);
    CHECK(g.sample.objects == cfg.objects);
    CHECK(g.sample.feature_dim == cfg.feature_dim);
    CHECK(g.sample.query_length() == cfg.query_length());
    const auto& ev = g.script.target_event();
    CHECK(g.sample.gt.start == static_cast<double>(ev.start) / cfg.frames);
    CHECK(g.sample.gt.end == static_cast<double>(ev.end) / cfg.frames);
    for (const auto& e : g.script.events) CHECK(e.end <= cfg.frames);
  }
}

TEST_CASE("features identify the target object on distractor-free data") {
  GeneratorConfig cfg;
  World world(cfg);
  const auto& vocab = world.vocabulary();
  std::size_t correct = 0, total = 500;
  for (std::uint64_t seed = 0; seed < total; ++seed) {
    auto g = generate_scene(cfg, seed);
    const auto& s = g.sample;
    // Object word is the last content token of the query.
    const std::size_t object_class = s.query_ids.back() - vocab.object(0);
    const auto query_embedding = world.object_embedding(object_class);
    std::size_t best = 0;
    double best_cos = -2;
    for (std::size_t k = 0; k < s.objects; ++k) {
      const double c = cosine(row(s.appearance_local, 0, k), query_embedding);
      if (c > best_cos) best_cos = c, best = k;
    }
    correct += best == slot_of(g.script, g.script.target);
  }
  CHECK(static_cast<double>(correct) / total >= 0.95);
}

TEST_CASE("a single channel cannot separate confusable distractors") {
  GeneratorConfig cfg;
  World world(cfg);

  SUBCASE("appearance on motion-confusable data") {
    cfg.motion_confusable_rate = 1.0;
    std::size_t picks_distractor = 0, n = 400;
    for (std::uint64_t seed = 0; seed < n; ++seed) {
      auto g = generate_scene(cfg, seed);
      const auto emb = world.object_embedding(g.script.target_class());
      const auto a = slot_of(g.script, g.script.target);
      const auto b = slot_of(g.script, distractor(g.script, true));
      const auto t = g.script.target_event().start;
      picks_distractor += cosine(row(g.sample.appearance_local, t, b), emb) >
                          cosine(row(g.sample.appearance_local, t, a), emb);
    }
    CHECK(static_cast<double>(picks_distractor) / n >= 0.4);
  }

  SUBCASE("motion on appearance-confusable data") {
    cfg.appearance_confusable_rate = 1.0;
    std::size_t picks_distractor = 0, n = 400;
    for (std::uint64_t seed = 0; seed < n; ++seed) {
      auto g = generate_scene(cfg, seed);
      const auto emb = world.action_embedding(g.script.target_event().action);
      auto best_over_time = [&](std::size_t slot) {
        double best = -2;
        for (std::size_t t = 0; t < g.sample.frames; ++t) {
          best = std::max(best, cosine(row(g.sample.motion_local, t, slot), emb));
        }
        return best;
      };
      const auto a = slot_of(g.script, g.script.target);
      const auto b = slot_of(g.script, distractor(g.script, false));
      picks_distractor += best_over_time(b) > best_over_time(a);
    }
    CHECK(static_cast<double>(picks_distractor) / n >= 0.4);
  }
}

TEST_CASE("dataset round trip is bitwise") {
  GeneratorConfig cfg;
  cfg.frames = 8;
  cfg.max_event_frames = 3;
  cfg.min_event_frames = 2;
  cfg.motion_confusable_rate = 0.5;
  auto samples = samples_of(generate_split(cfg, 3, 4));
  const auto path = temp_path("roundtrip.mgds");
  write_dataset(path, samples);
  auto back = read_dataset(path);
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) CHECK(same_sample(samples[i], back[i]));
}

TEST_CASE("dataset file size follows the record layout") {
  // header: 4 magic + 4 version + 8 count = 16
  // record (T=32, K=4, N=2, D=32): 8 id + 16 dims + 16 gt + 8 ids
  //   + 8 * (2*32*4*32 + 2*32*32 + 4*32*4) + 4 crc = 86068
  GeneratorConfig cfg;
  auto samples = samples_of(generate_split(cfg, 9, 100));
  const auto path = temp_path("hundred.mgds");
  write_dataset(path, samples);
  CHECK(fs::file_size(path) == 16 + 100 * 86068);
  CHECK(dataset_record_bytes(32, 4, 2, 32) == 86068);
}

TEST_CASE("damaged dataset files raise errors instead of crashing") {
  GeneratorConfig cfg;
  cfg.frames = 8;
  cfg.min_event_frames = 2;
  cfg.max_event_frames = 3;
  auto samples = samples_of(generate_split(cfg, 4, 3));
  const auto path = temp_path("damaged.mgds");
  write_dataset(path, samples);
  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  auto rewrite = [&](const std::vector<char>& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  SUBCASE("truncated") {
    rewrite(std::vector<char>(bytes.begin(), bytes.end() - 100));
    CHECK_THROWS_WITH_AS(read_dataset(path), doctest::Contains("checksum"), DatasetError);
  }
  SUBCASE("flipped payload byte") {
    auto b = bytes;
    b[200] ^= 0x40;
    rewrite(b);
    CHECK_THROWS_WITH_AS(read_dataset(path), doctest::Contains("checksum"), DatasetError);
  }
  SUBCASE("bad magic") {
    auto b = bytes;
    b[0] = 'X';
    rewrite(b);
    CHECK_THROWS_AS(read_dataset(path), DatasetError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(read_dataset(temp_path("nope.mgds")), DatasetError); }
}

TEST_CASE("manifest has one line per sample") {
  GeneratorConfig cfg;
  cfg.filler_tokens = 1;
  auto samples = samples_of(generate_split(cfg, 5, 3));
  const auto path = temp_path("manifest.jsonl");
  write_manifest(path, samples, Vocabulary(cfg));
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j["id"] == n);
    CHECK(j["query"].size() == 3);
    CHECK(j["query"][0] == "person");
    CHECK(j["gt_segment"][0].get<double>() == samples[n].gt.start);
    ++n;
  }
  CHECK(n == 3);
}
