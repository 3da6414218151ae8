#pragma once

// Video and query encoders.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "marn/params.hpp"
#include "marn/tensor.hpp"

namespace marn {

// Sinusoidal encoding: component 2i = sin(index / 10000^(2i/dim)), 2i+1 = cos.
Tensor position_encoding(std::size_t index, std::size_t dim);
// Rows 0..count-1 of position_encoding stacked into [count x dim].
Tensor position_table(std::size_t count, std::size_t dim);

// [T x D] -> [(T*K) x D], each frame row repeated for its K object slots.
Tensor expand_frames(const Tensor& frames, std::size_t objects);

// Object-level encoder for one feature stream (appearance or motion).
class StreamEncoder {
 public:
  static StreamEncoder create(ParamStore& store, const std::string& prefix, std::size_t input_dim,
                              std::size_t model_dim);

  // local [T x K x D_in], global [T x D_in], boxes [T x K x 4] -> [(T*K) x D].
  Tensor operator()(const Tensor& local, const Tensor& global, const Tensor& boxes) const;

  // [T x D] projected global features before expansion to object rows.
  Tensor global_features(const Tensor& global) const;

  std::size_t model_dim() const { return box_fc_.out_features(); }

 private:
  Linear box_fc_;
  Linear local_fc_;
  Linear global_fc_;
  Linear fuse_fc_;
};

struct EncodedVideo {
  Tensor appearance;  // F_a [(T*K) x D]
  Tensor motion;      // F_m [(T*K) x D], undefined when the motion stream is off
};

struct EncodedQuery {
  Tensor words;   // Q [N x D]
  Tensor global;  // q_global [D]
};

struct QueryEncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t model_dim = 64;
  std::size_t heads = 8;
};

class MultiHeadSelfAttention {
 public:
  static MultiHeadSelfAttention create(ParamStore& store, const std::string& prefix,
                                       std::size_t dim, std::size_t heads);

  // x + MHSA(x). When `weights` is given, receives one [N x N] map per head.
  Tensor operator()(const Tensor& x, std::vector<Tensor>* weights = nullptr) const;

 private:
  std::size_t heads_ = 1;
  Linear wq_, wk_, wv_, wo_;
};

// Single-direction GRU with PyTorch gate layout (r, z, n).
class GruCell {
 public:
  static GruCell create(ParamStore& store, const std::string& prefix, std::size_t input_dim,
                        std::size_t hidden_dim);

  // x [N x D_in] -> hidden states [N x H], visiting rows in order or reversed.
  // Row i of the result is the state after consuming row i.
  Tensor run(const Tensor& x, bool reverse) const;
  std::size_t hidden_dim() const { return hidden_; }

 private:
  std::size_t hidden_ = 0;
  Linear input_;   // D_in -> 3H
  Linear hidden_proj_;  // H -> 3H
};

class QueryEncoder {
 public:
  static QueryEncoder create(ParamStore& store, const QueryEncoderConfig& config);

  EncodedQuery operator()(std::span<const std::uint32_t> ids,
                          std::vector<Tensor>* attention = nullptr) const;

 private:
  QueryEncoderConfig config_;
  Tensor embedding_;
  MultiHeadSelfAttention attention_;
  GruCell forward_;
  GruCell backward_;
  Linear word_proj_;
  Linear sentence_proj_;
};

}  // namespace marn
