#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "marn/ablation.hpp"
#include "marn/checkpoint.hpp"
#include "marn/config.hpp"
#include "marn/gradcheck.hpp"
#include "marn/model.hpp"
#include "marn/synth.hpp"
#include "marn/train.hpp"

using namespace marn;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

std::vector<GroundingSample> split_from(const std::string& path, const GeneratorConfig& data,
                                        std::uint64_t seed, const char* stream, std::size_t count) {
  if (!path.empty()) return read_dataset(path);
  if (count == 0) return {};
  return samples_of(generate_split(data, derive_seed(seed, stream), count));
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

json matrix_json(const Tensor& t) {
  json rows = json::array();
  const auto v = t.values();
  const std::size_t cols = t.shape().size() > 1 ? t.shape()[1] : 1;
  for (std::size_t r = 0; r * cols < v.size(); ++r) {
    rows.push_back(std::vector<double>(v.begin() + r * cols, v.begin() + (r + 1) * cols));
  }
  return rows;
}

json vector_json(const Tensor& t) {
  const auto v = t.values();
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"motion-appearance reasoning network for temporal sentence grounding"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "write a synthetic dataset");
  std::string gen_config, gen_out, gen_manifest;
  std::uint64_t gen_seed = 1;
  std::size_t gen_count = 100;
  gen->add_option("--config", gen_config, "run config JSON (its data section is used)");
  gen->add_option("--out", gen_out, "dataset file")->required();
  gen->add_option("--manifest", gen_manifest, "JSON-lines manifest");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--count", gen_count)->check(CLI::PositiveNumber);

  // train
  auto* tr = app.add_subcommand("train", "train a model and write the best checkpoint");
  std::string tr_config, tr_train, tr_val, tr_out, tr_trace;
  std::optional<std::uint64_t> tr_seed;
  std::optional<std::size_t> tr_epochs;
  std::size_t tr_train_count = 500, tr_val_count = 100;
  tr->add_option("--config", tr_config);
  tr->add_option("--train", tr_train, "training dataset (generated when absent)");
  tr->add_option("--val", tr_val, "validation dataset (generated when absent)");
  tr->add_option("--train-count", tr_train_count, "generated training samples");
  tr->add_option("--val-count", tr_val_count, "generated validation samples (0 disables)");
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--trace", tr_trace, "JSON-lines trace path");
  tr->add_option("--seed", tr_seed);
  tr->add_option("--epochs", tr_epochs);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_report;
  std::size_t ev_count = 200;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data, "test dataset (generated from the checkpoint config when absent)");
  ev->add_option("--count", ev_count, "generated test samples");
  ev->add_option("--report", ev_report, "JSON report path");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train every variant over several seeds");
  std::string ab_config, ab_json;
  AblationSetup setup;
  std::vector<std::string> ab_variants;
  ab->add_option("--config", ab_config);
  ab->add_option("--seeds", setup.seeds)->check(CLI::PositiveNumber);
  ab->add_option("--first-seed", setup.first_seed);
  ab->add_option("--train-count", setup.train_count);
  ab->add_option("--val-count", setup.val_count);
  ab->add_option("--test-count", setup.test_count);
  ab->add_option("--variants", ab_variants)->delimiter(',');
  ab->add_option("--json", ab_json, "per-run results");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  std::uint64_t gc_seed = 1;
  bool gc_quiet = false;
  gc->add_option("--seed", gc_seed);
  gc->add_flag("--quiet", gc_quiet, "only print failures and the summary");

  // inspect
  auto* in = app.add_subcommand("inspect", "dump object fusion and frame weights for one sample");
  std::string in_ckpt, in_config, in_data;
  std::size_t in_index = 0;
  std::uint64_t in_seed = 1;
  in->add_option("--checkpoint", in_ckpt);
  in->add_option("--config", in_config, "untrained model from this config when no checkpoint");
  in->add_option("--data", in_data, "dataset (one sample is generated when absent)");
  in->add_option("--index", in_index);
  in->add_option("--seed", in_seed, "sample seed when generating");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen) {
      const auto cfg = config_or_default(gen_config);
      const auto samples = samples_of(generate_split(cfg.data, gen_seed, gen_count));
      write_dataset(gen_out, samples);
      if (!gen_manifest.empty()) write_manifest(gen_manifest, samples, World(cfg.data).vocabulary());
      std::printf("wrote %zu samples to %s\n", samples.size(), gen_out.c_str());
    } else if (*tr) {
      auto cfg = config_or_default(tr_config);
      if (tr_seed) cfg.train.seed = *tr_seed;
      if (tr_epochs) cfg.train.epochs = *tr_epochs;
      cfg.validate();
      if (tr_train.empty()) tr_train = cfg.paths.train;
      if (tr_val.empty()) tr_val = cfg.paths.val;
      const auto train_s = split_from(tr_train, cfg.data, cfg.train.seed, "data/train", tr_train_count);
      const auto val_s = split_from(tr_val, cfg.data, cfg.train.seed, "data/val", tr_val_count);
      std::ofstream trace;
      TrainHooks hooks;
      if (!tr_trace.empty()) {
        trace.open(tr_trace);
        if (!trace) throw std::runtime_error("cannot open " + tr_trace + " for writing");
        hooks.trace = &trace;
      }
      hooks.on_epoch = [](const EpochRecord& r, const Model&) {
        std::fprintf(stderr, "epoch %3zu  lr %.2e  loss %.5f  grad %.3f  val %s\n", r.epoch, r.lr, r.loss,
                     r.mean_grad_norm, r.val_metric ? std::to_string(*r.val_metric).c_str() : "-");
        return true;
      };
      const auto result = train(cfg, train_s, val_s, hooks);
      save_checkpoint(tr_out, result.best);
      std::printf("best epoch %zu  val R@1,IoU=0.5 %.2f%s\n", result.best_epoch, result.best_metric,
                  result.stopped_early ? "  (stopped early)" : "");
    } else if (*ev) {
      const auto ckpt = load_checkpoint(ev_ckpt);
      const auto model = ckpt.build();
      const auto& cfg = ckpt.config;
      if (ev_data.empty()) ev_data = cfg.paths.test;
      const auto test = split_from(ev_data, cfg.data, cfg.train.seed, "data/test", ev_count);
      if (test.empty()) throw std::runtime_error("empty test split");
      const auto report = model.evaluate(test);
      std::cout << report.table();
      if (!ev_report.empty()) {
        auto j = report.to_json();
        j["config"] = to_json(cfg);
        write_text(ev_report, j.dump(2) + "\n");
      }
    } else if (*ab) {
      setup.base = config_or_default(ab_config);
      if (!ab_variants.empty()) setup.variants = ab_variants;
      for (const auto& v : setup.variants) variant_flags(v);
      const auto result = run_ablation(setup, &std::cerr);
      std::cout << result.table();
      if (!ab_json.empty()) {
        auto j = result.to_json();
        j["config"] = to_json(setup.base);
        write_text(ab_json, j.dump(2) + "\n");
      }
    } else if (*gc) {
      const auto start = std::chrono::steady_clock::now();
      const auto results = run_gradcheck_suite(gc_seed);
      std::size_t failed = 0;
      for (const auto& r : results) {
        failed += !r.passed;
        if (!gc_quiet || !r.passed) {
          std::printf("%-4s %-36s max rel err %.3e over %zu entries\n", r.passed ? "ok" : "FAIL",
                      r.name.c_str(), r.max_rel_error, r.entries);
        }
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::printf("%zu/%zu checks passed in %.1fs\n", results.size() - failed, results.size(), secs);
      return failed == 0 ? 0 : 1;
    } else if (*in) {
      std::optional<Model> model;
      if (!in_ckpt.empty()) {
        model.emplace(load_checkpoint(in_ckpt).build());
      } else {
        model.emplace(config_or_default(in_config));
      }
      const auto& cfg = model->config();
      GroundingSample sample;
      if (!in_data.empty()) {
        const auto all = read_dataset(in_data);
        if (in_index >= all.size()) throw UsageError("--index out of range");
        sample = all[in_index];
      } else {
        sample = generate_sample(cfg.data, in_seed);
      }
      NoGradGuard guard;
      const auto out = model->forward(sample);
      json j;
      j["sample"] = sample.id;
      j["gt"] = {sample.gt.start, sample.gt.end};
      j["appearance_object_weights"] = matrix_json(out.appearance.object_weights);
      if (out.motion) j["motion_object_weights"] = matrix_json(out.motion->object_weights);
      if (out.association) {
        j["appearance_frame_weights"] = vector_json(out.association->appearance_weight);
        j["motion_frame_weights"] = vector_json(out.association->motion_weight);
      }
      j["top"] = json::array();
      for (const auto& s : model->predict(sample, 5)) {
        j["top"].push_back({{"segment", {s.segment.start, s.segment.end}}, {"score", s.score}});
      }
      std::cout << j.dump(2) << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
