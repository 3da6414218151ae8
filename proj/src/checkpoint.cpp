#include "marn/checkpoint.hpp"

#include <fstream>
#include <map>

#include "binary_io.hpp"

namespace marn {

namespace {

void put_tensor(io::ByteWriter& w, const std::string& name, const Shape& shape,
                std::span<const double> values) {
  w.string(name);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
  w.f64s(values);
}

}  // namespace

Checkpoint Checkpoint::capture(const Model& model, const AdamState& optimizer, CheckpointMeta meta) {
  Checkpoint c;
  c.config = model.config();
  c.config.optimizer = optimizer.config;
  for (const auto& p : model.params().items()) c.params.emplace_back(p.name, p.tensor.detached());
  c.optimizer = optimizer;
  c.meta = meta;
  return c;
}

void Checkpoint::restore(Model& model) const {
  const auto items = model.params().items();
  if (items.size() != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(params.size()) +
                          " parameters, model has " + std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& [name, value] = params[i];
    if (items[i].name != name || items[i].tensor.shape() != value.shape()) {
      throw CheckpointError("parameter mismatch at " + items[i].name + " vs " + name);
    }
    auto dst = items[i].tensor;
    std::copy(value.values().begin(), value.values().end(), dst.mutable_values().begin());
  }
}

Model Checkpoint::build() const {
  Model m(config);
  restore(m);
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  io::ByteWriter w;
  w.bytes("MARN", 4);
  w.u32(kCheckpointVersion);
  w.string(to_json(c.config).dump());
  const auto n = c.params.size();
  const bool with_moments = c.optimizer.first_moment.size() == n;
  w.u32(static_cast<std::uint32_t>(n * (with_moments ? 3 : 1) + 3));
  for (const auto& [name, t] : c.params) put_tensor(w, "param/" + name, t.shape(), t.values());
  if (with_moments) {
    for (std::size_t i = 0; i < n; ++i) {
      put_tensor(w, "adam.m/" + c.params[i].first, c.params[i].second.shape(), c.optimizer.first_moment[i]);
      put_tensor(w, "adam.v/" + c.params[i].first, c.params[i].second.shape(), c.optimizer.second_moment[i]);
    }
  }
  const double epoch = static_cast<double>(c.meta.epoch), step = static_cast<double>(c.optimizer.step);
  put_tensor(w, "meta/epoch", {}, std::span<const double>(&epoch, 1));
  put_tensor(w, "meta/best", {}, std::span<const double>(&c.meta.best_metric, 1));
  put_tensor(w, "meta/step", {}, std::span<const double>(&step, 1));
  w.u32(io::crc32_of(w.buffer()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(w.buffer().data()),
            static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::string(bytes.begin(), bytes.begin() + 4) != "MARN") {
    throw CheckpointError(path.string() + " is not a checkpoint");
  }
  const std::span<const std::uint8_t> body(bytes.data(), bytes.size() - 4);
  io::ByteReader trailer(std::span<const std::uint8_t>(bytes).subspan(bytes.size() - 4));
  if (trailer.u32() != io::crc32_of(body)) {
    throw CheckpointError(path.string() + ": checksum mismatch");
  }
  try {
    io::ByteReader r(body.subspan(4));
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
      throw CheckpointError(path.string() + ": unsupported version " + std::to_string(version));
    }
    Checkpoint c;
    c.config = run_config_from_json(nlohmann::json::parse(r.string()));
    c.optimizer.config = c.config.optimizer;
    const auto count = r.u32();
    std::map<std::string, Tensor> moments;
    std::map<std::string, double> meta;
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto name = r.string();
      Shape shape(r.u32());
      for (auto& d : shape) d = r.u32();
      std::vector<double> values(shape_numel(shape));
      r.f64s(values);
      const auto slash = name.find('/');
      const auto kind = name.substr(0, slash), key = name.substr(slash + 1);
      if (kind == "param") {
        c.params.emplace_back(key, Tensor(shape, std::move(values)));
      } else if (kind == "adam.m" || kind == "adam.v") {
        moments.emplace(name, Tensor(shape, std::move(values)));
      } else if (kind == "meta" && values.size() == 1) {
        meta[key] = values[0];
      } else {
        throw CheckpointError(path.string() + ": unexpected entry " + name);
      }
    }
    if (r.remaining() != 0) throw CheckpointError(path.string() + ": trailing bytes");
    for (const auto& [name, t] : c.params) {
      auto m = moments.find("adam.m/" + name), v = moments.find("adam.v/" + name);
      if (m == moments.end() || v == moments.end()) {
        c.optimizer.first_moment.emplace_back(t.numel(), 0.0);
        c.optimizer.second_moment.emplace_back(t.numel(), 0.0);
        continue;
      }
      c.optimizer.first_moment.emplace_back(m->second.values().begin(), m->second.values().end());
      c.optimizer.second_moment.emplace_back(v->second.values().begin(), v->second.values().end());
    }
    c.meta.epoch = static_cast<std::uint64_t>(meta["epoch"]);
    c.meta.best_metric = meta["best"];
    c.optimizer.step = static_cast<std::uint64_t>(meta["step"]);
    return c;
  } catch (const std::out_of_range&) {
    throw CheckpointError(path.string() + ": truncated");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad config: " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": bad config: " + e.what());
  }
}

}  // namespace marn
