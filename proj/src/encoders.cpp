#include "marn/encoders.hpp"

#include <cmath>
#include <stdexcept>

#include "marn/ops.hpp"

namespace marn {

namespace {

std::vector<std::size_t> frame_of_row(std::size_t frames, std::size_t objects) {
  std::vector<std::size_t> ids(frames * objects);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i / objects;
  return ids;
}

}  // namespace

Tensor expand_frames(const Tensor& frames, std::size_t objects) {
  if (frames.rank() != 2 || objects == 0) {
    throw DimensionError("expand_frames: expected [T x D] and K > 0, got " + shape_str(frames.shape()));
  }
  return gather_rows(frames, frame_of_row(frames.rows(), objects));
}

Tensor position_encoding(std::size_t index, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw std::invalid_argument("position_encoding: dimension must be even and positive, got " +
                                std::to_string(dim));
  }
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double angle =
        static_cast<double>(index) / std::pow(10000.0, static_cast<double>(2 * i) / dim);
    v[2 * i] = std::sin(angle);
    v[2 * i + 1] = std::cos(angle);
  }
  return Tensor::vector(std::move(v));
}

Tensor position_table(std::size_t count, std::size_t dim) {
  std::vector<double> v;
  v.reserve(count * dim);
  for (std::size_t t = 0; t < count; ++t) {
    const auto row = position_encoding(t, dim);
    v.insert(v.end(), row.values().begin(), row.values().end());
  }
  return Tensor({count, dim}, std::move(v));
}

StreamEncoder StreamEncoder::create(ParamStore& store, const std::string& prefix,
                                    std::size_t input_dim, std::size_t model_dim) {
  if (model_dim % 2 != 0) throw std::invalid_argument("model dimension must be even");
  StreamEncoder e;
  e.box_fc_ = Linear::create(store, prefix + ".box_fc", 4, model_dim);
  e.local_fc_ = Linear::create(store, prefix + ".local_fc", input_dim + 2 * model_dim, model_dim);
  e.global_fc_ = Linear::create(store, prefix + ".global_fc", input_dim + model_dim, model_dim);
  e.fuse_fc_ = Linear::create(store, prefix + ".fuse_fc", 2 * model_dim, model_dim);
  return e;
}

Tensor StreamEncoder::global_features(const Tensor& global) const {
  if (global.rank() != 2) throw DimensionError("global features must be [T x D_in]");
  const auto pe = position_table(global.dim(0), model_dim());
  return global_fc_(concat({global, pe}, 1));
}

Tensor StreamEncoder::operator()(const Tensor& local, const Tensor& global,
                                 const Tensor& boxes) const {
  if (local.rank() != 3 || boxes.rank() != 3 || global.rank() != 2) {
    throw DimensionError("encode_video: expected local [T x K x D], global [T x D], boxes [T x K x 4]");
  }
  const auto T = local.dim(0), K = local.dim(1), d_in = local.dim(2);
  const auto D = model_dim();
  if (global.dim(0) != T || global.dim(1) != d_in || boxes.dim(0) != T || boxes.dim(1) != K ||
      boxes.dim(2) != 4) {
    throw DimensionError("encode_video: inconsistent inputs " + shape_str(local.shape()) + ", " +
                         shape_str(global.shape()) + ", " + shape_str(boxes.shape()));
  }
  if (local_fc_.in_features() != d_in + 2 * D) {
    throw DimensionError("encode_video: feature dim " + std::to_string(d_in) +
                         " does not match encoder input " +
                         std::to_string(local_fc_.in_features() - 2 * D));
  }
  const auto rows = frame_of_row(T, K);
  const auto e_box = box_fc_(reshape(boxes, {T * K, 4}));
  const auto e_time = gather_rows(position_table(T, D), rows);
  const auto v_local = local_fc_(concat({reshape(local, {T * K, d_in}), e_box, e_time}, 1));
  const auto v_global = expand_frames(global_features(global), K);
  return fuse_fc_(concat({v_local, v_global}, 1));
}

MultiHeadSelfAttention MultiHeadSelfAttention::create(ParamStore& store, const std::string& prefix,
                                                      std::size_t dim, std::size_t heads) {
  if (heads == 0 || dim % heads != 0) {
    throw std::invalid_argument("attention heads (" + std::to_string(heads) +
                                ") must divide the model dimension (" + std::to_string(dim) + ")");
  }
  MultiHeadSelfAttention m;
  m.heads_ = heads;
  m.wq_ = Linear::create(store, prefix + ".wq", dim, dim);
  m.wk_ = Linear::create(store, prefix + ".wk", dim, dim);
  m.wv_ = Linear::create(store, prefix + ".wv", dim, dim);
  m.wo_ = Linear::create(store, prefix + ".wo", dim, dim);
  return m;
}

Tensor MultiHeadSelfAttention::operator()(const Tensor& x, std::vector<Tensor>* weights) const {
  const auto q = wq_(x), k = wk_(x), v = wv_(x);
  const auto dh = x.dim(1) / heads_;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  for (std::size_t h = 0; h < heads_; ++h) {
    const auto b = h * dh, e = b + dh;
    auto a = softmax(scale(matmul_nt(slice_cols(q, b, e), slice_cols(k, b, e)), inv), 1);
    if (weights) weights->push_back(a);
    outs.push_back(matmul(a, slice_cols(v, b, e)));
  }
  return add(x, wo_(concat(outs, 1)));
}

GruCell GruCell::create(ParamStore& store, const std::string& prefix, std::size_t input_dim,
                        std::size_t hidden_dim) {
  GruCell g;
  g.hidden_ = hidden_dim;
  g.input_ = Linear::create(store, prefix + ".input", input_dim, 3 * hidden_dim);
  g.hidden_proj_ = Linear::create(store, prefix + ".hidden", hidden_dim, 3 * hidden_dim);
  return g;
}

Tensor GruCell::run(const Tensor& x, bool reverse) const {
  const auto N = x.dim(0), H = hidden_;
  const auto xi = input_(x);
  const Tensor ones({1, H}, 1.0);
  Tensor h({1, H}, 0.0);
  std::vector<Tensor> states(N);
  for (std::size_t step = 0; step < N; ++step) {
    const auto i = reverse ? N - 1 - step : step;
    const auto xt = slice_rows(xi, i, i + 1);
    const auto hh = hidden_proj_(h);
    const auto r = sigmoid(add(slice_cols(xt, 0, H), slice_cols(hh, 0, H)));
    const auto z = sigmoid(add(slice_cols(xt, H, 2 * H), slice_cols(hh, H, 2 * H)));
    const auto n = tanh(add(slice_cols(xt, 2 * H, 3 * H), mul(r, slice_cols(hh, 2 * H, 3 * H))));
    h = add(mul(sub(ones, z), n), mul(z, h));
    states[i] = h;
  }
  return concat(states, 0);
}

QueryEncoder QueryEncoder::create(ParamStore& store, const QueryEncoderConfig& config) {
  const auto D = config.model_dim;
  if (config.vocab_size == 0) throw std::invalid_argument("query encoder: empty vocabulary");
  if (D % 2 != 0) throw std::invalid_argument("query encoder: model dimension must be even");
  QueryEncoder q;
  q.config_ = config;
  q.embedding_ = store.add_normal("query.embedding", {config.vocab_size, D}, 0.02);
  q.attention_ = MultiHeadSelfAttention::create(store, "query.attention", D, config.heads);
  q.forward_ = GruCell::create(store, "query.gru_fwd", D, D / 2);
  q.backward_ = GruCell::create(store, "query.gru_bwd", D, D / 2);
  q.word_proj_ = Linear::create(store, "query.word_proj", D, D);
  q.sentence_proj_ = Linear::create(store, "query.sentence_proj", D, D);
  return q;
}

EncodedQuery QueryEncoder::operator()(std::span<const std::uint32_t> ids,
                                      std::vector<Tensor>* attention) const {
  if (ids.empty()) throw std::invalid_argument("encode_query: empty query");
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  for (auto id : rows) {
    if (id >= config_.vocab_size) {
      throw std::out_of_range("encode_query: token id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(config_.vocab_size));
    }
  }
  const auto N = rows.size();
  const auto x = attention_(embedding_lookup(embedding_, rows), attention);
  const auto fw = forward_.run(x, false);
  const auto bw = backward_.run(x, true);
  EncodedQuery out;
  out.words = word_proj_(concat({fw, bw}, 1));
  const auto last = concat({slice_rows(fw, N - 1, N), slice_rows(bw, 0, 1)}, 1);
  out.global = reshape(sentence_proj_(last), {config_.model_dim});
  return out;
}

}  // namespace marn
