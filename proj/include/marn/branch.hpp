#pragma once

// Cross-modal object reasoning over one feature stream, plus the simpler
// co-attention pathway used by the ablation baseline.

#include <span>
#include <string>
#include <vector>

#include "marn/params.hpp"
#include "marn/tensor.hpp"

namespace marn {

struct BranchConfig {
  std::size_t model_dim = 64;      // D
  std::size_t attention_dim = 0;   // D_h, 0 means D
  std::size_t affinity_dim = 0;    // D_k, 0 means D
  std::size_t graph_layers = 1;
  bool scale_affinity = false;     // divide affinity logits by sqrt(D_k)

  std::size_t hidden() const { return attention_dim ? attention_dim : model_dim; }
  std::size_t key() const { return affinity_dim ? affinity_dim : model_dim; }
};

struct BranchOutput {
  Tensor word_attention;  // [(T*K) x N], softmax over words
  Tensor attended;        // F^ [(T*K) x D]
  Tensor affinity;        // A [(T*K) x (T*K)] of the last graph layer
  Tensor updated;         // F~ [(T*K) x D]
  Tensor scores;          // c [T x K]
  Tensor object_weights;  // softmax_k(c) [T x K]
  Tensor frames;          // H [T x D]
};

struct GraphLayer {
  Tensor w4, w5, w6, w7;
};

class ReasoningBranch {
 public:
  static ReasoningBranch create(ParamStore& store, const std::string& prefix,
                                const BranchConfig& config);

  // f^ = sigmoid(W3 f' + b2) * f with f' the word attention readout.
  Tensor interact(const Tensor& objects, const Tensor& words, Tensor* word_attention = nullptr) const;
  // Returns F~; `affinity` receives A of the last layer.
  Tensor reason(const Tensor& attended, Tensor* affinity = nullptr) const;
  // h_t = sum_k softmax_k(cos(f~_tk, q W_q)) f~_tk.
  Tensor fuse(const Tensor& updated, const Tensor& query, std::size_t objects,
              Tensor* scores = nullptr, Tensor* weights = nullptr) const;

  BranchOutput operator()(const Tensor& objects, const Tensor& words, const Tensor& query,
                          std::size_t objects_per_frame) const;

  const BranchConfig& config() const { return config_; }
  std::span<const GraphLayer> layers() const { return layers_; }

 private:
  BranchConfig config_;
  Tensor w1_, w2_, w_, b1_, w3_, b2_, wq_;
  std::vector<GraphLayer> layers_;
};

// Baseline pathway: co-attention between objects and words, concatenation
// enhancement, object self-attention, and mean pooling over the objects of a
// frame. Produces frame features H [T x D] from F [(T*K) x D].
class CoAttentionPathway {
 public:
  static CoAttentionPathway create(ParamStore& store, const std::string& prefix,
                                   std::size_t model_dim);

  BranchOutput operator()(const Tensor& objects, const Tensor& words,
                          std::size_t objects_per_frame) const;

 private:
  Linear enhance_;
};

}  // namespace marn
