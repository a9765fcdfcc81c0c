#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "va/rng.hpp"
#include "va/tensor.hpp"

namespace va::nn {

enum class LayerKind {
    BatchNorm,
    Conv2d,
    Relu,
    MaxPool2x2,
    QuadrantPool,
    Dense,
    Dropout,
    Softmax,
};

// One layer of the feed-forward stack. Builders fill the fan fields from
// context; only the fields relevant to `kind` are meaningful.
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int kernel = 0;       // conv spatial size
    int filters = 0;      // conv output channels
    int in_channels = 0;  // conv input channels
    int units = 0;        // dense output width
    int fan_in = 0;       // dense input width
    double drop_prob = 0.0;

    static LayerSpec batchnorm(int channels) {
        LayerSpec s;
        s.kind = LayerKind::BatchNorm;
        s.in_channels = channels;
        return s;
    }
    static LayerSpec conv2d(int in_channels, int filters, int kernel) {
        LayerSpec s;
        s.kind = LayerKind::Conv2d;
        s.in_channels = in_channels;
        s.filters = filters;
        s.kernel = kernel;
        return s;
    }
    static LayerSpec relu() { return LayerSpec{}; }
    static LayerSpec maxpool() {
        LayerSpec s;
        s.kind = LayerKind::MaxPool2x2;
        return s;
    }
    static LayerSpec quadrantpool() {
        LayerSpec s;
        s.kind = LayerKind::QuadrantPool;
        return s;
    }
    static LayerSpec dense(int fan_in, int units) {
        LayerSpec s;
        s.kind = LayerKind::Dense;
        s.fan_in = fan_in;
        s.units = units;
        return s;
    }
    static LayerSpec dropout(double p) {
        LayerSpec s;
        s.kind = LayerKind::Dropout;
        s.drop_prob = p;
        return s;
    }
    static LayerSpec softmax() {
        LayerSpec s;
        s.kind = LayerKind::Softmax;
        return s;
    }
};

template <typename T>
struct ParamEntry {
    std::string name;
    TensorT<T> tensor;
    bool trainable = true;
    bool decay = true;  // participates in L2 weight decay
};

// Named tensor bag shared by models, gradients, and optimizer state.
template <typename T>
struct ParamSet {
    std::vector<ParamEntry<T>> entries;

    int add(std::string name, TensorT<T> tensor, bool trainable = true, bool decay = true) {
        entries.push_back({std::move(name), std::move(tensor), trainable, decay});
        return static_cast<int>(entries.size()) - 1;
    }

    TensorT<T>& tensor(int i) { return entries[static_cast<size_t>(i)].tensor; }
    const TensorT<T>& tensor(int i) const { return entries[static_cast<size_t>(i)].tensor; }

    int index_of(const std::string& name) const {
        for (size_t i = 0; i < entries.size(); ++i)
            if (entries[i].name == name) return static_cast<int>(i);
        return -1;
    }

    TensorT<T>& find(const std::string& name) {
        int i = index_of(name);
        if (i < 0) throw DataError("parameter not found: " + name);
        return entries[static_cast<size_t>(i)].tensor;
    }

    // Same names/shapes/flags, zero values. Used for gradients and velocity.
    ParamSet zeros_like() const {
        ParamSet out;
        out.entries.reserve(entries.size());
        for (const auto& e : entries)
            out.entries.push_back({e.name, e.tensor.zeros_like(), e.trainable, e.decay});
        return out;
    }

    size_t total_elements() const {
        size_t n = 0;
        for (const auto& e : entries) n += e.tensor.size();
        return n;
    }

    std::vector<T> flatten() const {
        std::vector<T> out;
        out.reserve(total_elements());
        for (const auto& e : entries) out.insert(out.end(), e.tensor.vec().begin(), e.tensor.vec().end());
        return out;
    }

    void unflatten(const std::vector<T>& flat) {
        if (flat.size() != total_elements())
            throw ShapeError("unflatten: length mismatch " + std::to_string(flat.size()) + " vs " +
                             std::to_string(total_elements()));
        size_t pos = 0;
        for (auto& e : entries) {
            std::copy(flat.begin() + pos, flat.begin() + pos + e.tensor.size(), e.tensor.vec().begin());
            pos += e.tensor.size();
        }
    }
};

// Glorot-uniform parameters for one layer, biases zero, deterministic in seed.
// Conv: w [F,C,k,k], b [F]. Dense: w [units,fan_in], b [units].
// BatchNorm: gamma 1, beta 0, running mean 0, running variance 1.
template <typename T>
ParamSet<T> xavier_init(const LayerSpec& spec, uint64_t seed);

// ---- conv2d: cross-correlation, odd kernel, zero padding (k-1)/2, same-size output ----
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b);
template <typename T>
void conv2d_backward(const TensorT<T>& grad_out, const TensorT<T>& x, const TensorT<T>& w,
                     TensorT<T>& grad_x, TensorT<T>& grad_w, TensorT<T>& grad_b);

template <typename T>
TensorT<T> relu(const TensorT<T>& x);
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& grad_out, const TensorT<T>& x);

// 2x2 window, stride 2; argmax holds the flat input offset fed by each output
// cell (first row-major cell wins ties).
template <typename T>
TensorT<T> maxpool2x2(const TensorT<T>& x, std::vector<int64_t>& argmax);
template <typename T>
TensorT<T> maxpool2x2_backward(const TensorT<T>& grad_out, const std::vector<int64_t>& argmax,
                               const std::vector<int>& x_shape);

// Four equal quadrants, arithmetic mean each, output [B,C,2,2].
template <typename T>
TensorT<T> quadrant_pool(const TensorT<T>& x);
template <typename T>
TensorT<T> quadrant_pool_backward(const TensorT<T>& grad_out, const std::vector<int>& x_shape);

template <typename T>
struct BatchNormCache {
    TensorT<T> xhat;
    std::vector<T> inv_std;  // per channel
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.99;

// Per-channel statistics over batch and spatial dims; train mode updates the
// running stats in place, eval mode reads them.
template <typename T>
TensorT<T> batchnorm_forward(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                             TensorT<T>& running_mean, TensorT<T>& running_var, bool train,
                             BatchNormCache<T>* cache);
template <typename T>
void batchnorm_backward(const TensorT<T>& grad_out, const BatchNormCache<T>& cache,
                        const TensorT<T>& gamma, TensorT<T>& grad_x, TensorT<T>& grad_gamma,
                        TensorT<T>& grad_beta);

// y = x * w^T + b, w is [units, fan_in].
template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b);
template <typename T>
void dense_backward(const TensorT<T>& grad_out, const TensorT<T>& x, const TensorT<T>& w,
                    TensorT<T>& grad_x, TensorT<T>& grad_w, TensorT<T>& grad_b);

// Inverted dropout: survivors scaled by 1/(1-p) at train time, eval is identity.
// mask is 0/1 per element; backward is grad_out * mask / (1-p).
template <typename T>
TensorT<T> dropout_forward(const TensorT<T>& x, double p, bool train, uint64_t seed,
                           TensorT<T>* mask);

template <typename T>
TensorT<T> softmax(const TensorT<T>& logits);

}  // namespace va::nn
