#pragma once

// Motion-appearance association over frame features H_a, H_m [T x D].

#include <string>

#include "marn/params.hpp"
#include "marn/tensor.hpp"

namespace marn {

struct MaaSwitches {
  bool motion_guided = true;     // H^a = H_a + FFN(H_m)
  bool appearance_fused = true;  // H^m = H_m + softmax(H_m H^a^T) H^a
};

struct MaaOutput {
  Tensor appearance;         // H^a
  Tensor motion;             // H^m
  Tensor motion_attention;   // [T x T], undefined when appearance_fused is off
  Tensor appearance_weight;  // w_a [T]
  Tensor motion_weight;      // w_m [T]
  Tensor fused;              // H~ [T x D]
};

// Three frame-wise linear layers with ReLU between them; the last layer starts
// at zero so the module begins as identity plus fusion.
class FeedForward {
 public:
  static FeedForward create(ParamStore& store, const std::string& prefix, std::size_t dim);
  Tensor operator()(const Tensor& x) const;

 private:
  Linear l1_, l2_, l3_;
};

Tensor enhance_motion(const Tensor& motion, const Tensor& appearance, Tensor* attention = nullptr);

// H~ = softmax_T(H^a q) (.) H^a + softmax_T(H^m q) (.) H^m, the frame weights
// broadcast over channels.
Tensor query_fusion(const Tensor& appearance, const Tensor& motion, const Tensor& query,
                    Tensor* appearance_weight = nullptr, Tensor* motion_weight = nullptr);

class MaaModule {
 public:
  static MaaModule create(ParamStore& store, const std::string& prefix, std::size_t dim,
                          MaaSwitches switches);

  Tensor enhance_appearance(const Tensor& appearance, const Tensor& motion) const;
  MaaOutput operator()(const Tensor& appearance, const Tensor& motion, const Tensor& query) const;
  const MaaSwitches& switches() const { return switches_; }

 private:
  MaaSwitches switches_;
  FeedForward ffn_;
};

}  // namespace marn
