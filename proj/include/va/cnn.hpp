#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "va/layers.hpp"
#include "va/tensor.hpp"

namespace va::nn {

enum class HeadKind { Regression, Classification };

// Feed-forward stack: batchnorm -> conv/relu/maxpool x2 -> conv/relu ->
// quadrant pool -> dense/relu -> dropout -> head. The reference network uses
// filters 64/128/256, 300 dense units and dropout 0.5 on 96x96 grayscale
// input; tests shrink the widths through the same code.
struct CnnSpec {
    int input_hw = 96;
    int in_channels = 1;
    std::array<int, 3> filters{64, 128, 256};
    int kernel = 5;
    int dense_units = 300;
    HeadKind head = HeadKind::Regression;
    int classes = 8;
    double drop_prob = 0.5;

    int head_units() const { return head == HeadKind::Regression ? 2 : classes; }
    int dense_fan_in() const { return filters[2] * 4; }

    void validate() const;
    bool is_reference() const;

    // Canonical layer sequence, fan fields filled in.
    std::vector<LayerSpec> stack() const;
};

template <typename T>
struct CnnCache {
    TensorT<T> input;
    BatchNormCache<T> bn;
    TensorT<T> bn_out;
    TensorT<T> r1, p1, r2, p2, r3;  // post-relu / post-pool activations
    std::vector<int64_t> am1, am2;  // maxpool argmax
    TensorT<T> flat;                // quadrant-pool output, flattened
    TensorT<T> fc_pre;              // dense output before relu
    TensorT<T> features;            // 300-dim activation after relu, before dropout
    TensorT<T> drop_mask;
    TensorT<T> head_in;             // dropout output
    TensorT<T> logits;              // classification only
};

template <typename T>
class CnnModel {
  public:
    CnnModel() = default;
    explicit CnnModel(CnnSpec spec);

    // Glorot-uniform weights, zero biases, deterministic in seed.
    void init(uint64_t seed);

    // x is [B, in_channels, hw, hw]. Returns [B,2] raw valence/arousal for the
    // regression head or [B,classes] softmax probabilities for classification.
    TensorT<T> forward(const TensorT<T>& x, bool train, uint64_t dropout_seed,
                       CnnCache<T>* cache) const;

    // grad_head is d(loss)/d(head output) for regression, d(loss)/d(logits)
    // for classification. Fills `grads` (layout of params()) and returns the
    // gradient w.r.t. the input batch.
    TensorT<T> backward(const TensorT<T>& grad_head, const CnnCache<T>& cache,
                        ParamSet<T>& grads) const;

    const CnnSpec& spec() const { return spec_; }
    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }

    int feature_dim() const { return spec_.dense_units; }

  private:
    CnnSpec spec_;
    ParamSet<T> params_;
    // entry indices into params_
    int bn_gamma_ = -1, bn_beta_ = -1, bn_mean_ = -1, bn_var_ = -1;
    std::array<int, 3> conv_w_{-1, -1, -1}, conv_b_{-1, -1, -1};
    int fc_w_ = -1, fc_b_ = -1, head_w_ = -1, head_b_ = -1;

    void build_params();
};

// Text form stored in checkpoints.
std::string cnn_spec_to_text(const CnnSpec& spec);
CnnSpec cnn_spec_from_text(const std::string& text);

template <typename T>
TensorT<T> reshape(const TensorT<T>& t, std::vector<int> shape) {
    return TensorT<T>(std::move(shape), t.vec());
}

}  // namespace va::nn
