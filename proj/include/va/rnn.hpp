#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "va/layers.hpp"
#include "va/tensor.hpp"

namespace va::nn {

enum class CellKind { Simple, Gru };

// Stacked recurrent net over feature-vector windows. Layer l consumes layer
// l-1's full hidden sequence; a linear head reads the final step of the top
// layer. Reference configurations are one layer of 100 units or three layers
// of 100/100/50.
struct RnnSpec {
    CellKind cell = CellKind::Gru;
    std::vector<int> layers{100};
    int input_dim = 300;
    int output_dim = 2;

    void validate() const;
    bool is_reference() const;
};

template <typename T>
struct RnnCache {
    TensorT<T> window;                      // [steps, input_dim]
    std::vector<std::vector<T>> h;          // per layer, steps*width
    std::vector<std::vector<T>> z, r, hcand;  // gru only
};

template <typename T>
class RnnModel {
  public:
    RnnModel() = default;
    explicit RnnModel(RnnSpec spec);

    void init(uint64_t seed);

    // window is [steps, input_dim]; returns [output_dim]. Hidden state starts
    // at zero; windows are independent samples. If `window_` is set (> 0), the
    // step count must match it.
    TensorT<T> forward(const TensorT<T>& window, RnnCache<T>* cache) const;

    // Full backpropagation through time, no truncation. grad_y is
    // d(loss)/d(output). Fills `grads` with the layout of params().
    void backward(const TensorT<T>& grad_y, const RnnCache<T>& cache, ParamSet<T>& grads) const;

    const RnnSpec& spec() const { return spec_; }
    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }

    int window() const { return window_; }
    void set_window(int w) { window_ = w; }

  private:
    RnnSpec spec_;
    ParamSet<T> params_;
    int window_ = 0;  // 0 = accept any length
    // per-layer entry indices; simple uses [0..2] = w,u,b; gru uses all nine
    struct LayerIdx {
        int wz, uz, bz, wr, ur, br, wh, uh, bh;
    };
    std::vector<LayerIdx> layer_idx_;
    int head_w_ = -1, head_b_ = -1;

    void build_params();
};

// h = tanh(W x + U h_prev + b)
template <typename T>
TensorT<T> simple_rnn_step(const TensorT<T>& x, const TensorT<T>& h_prev, const TensorT<T>& w,
                           const TensorT<T>& u, const TensorT<T>& b);

// z = sigm(Wz x + Uz h_prev + bz), r = sigm(Wr x + Ur h_prev + br),
// hcand = tanh(Wh x + Uh (r*h_prev) + bh), h = (1-z)*h_prev + z*hcand.
template <typename T>
struct GruLayerParams {
    TensorT<T> wz, uz, bz, wr, ur, br, wh, uh, bh;
};

template <typename T>
TensorT<T> gru_step(const TensorT<T>& x, const TensorT<T>& h_prev, const GruLayerParams<T>& p);

std::string rnn_spec_to_text(const RnnSpec& spec, int window);
RnnSpec rnn_spec_from_text(const std::string& text, int* window_out);

}  // namespace va::nn
