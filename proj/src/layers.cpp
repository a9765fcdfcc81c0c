#include "va/layers.hpp"

#include <cmath>
#include <cstring>

#include "va/blas.hpp"

namespace va::nn {

namespace {

template <typename T>
void check_conv_args(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    if (x.rank() != 4) throw ShapeError("conv2d: input must be rank 4 [B,C,H,W], got " + x.shape_str());
    if (w.rank() != 4) throw ShapeError("conv2d: weight must be rank 4 [F,C,k,k], got " + w.shape_str());
    if (w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
        throw ShapeError("conv2d: kernel must be square and odd, got " + w.shape_str());
    if (x.dim(1) != w.dim(1))
        throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) +
                         " do not match weight channels " + std::to_string(w.dim(1)));
    require_shape(b, {w.dim(0)}, "conv2d bias");
    if (x.dim(2) < 1 || x.dim(3) < 1) throw ShapeError("conv2d: empty spatial dims " + x.shape_str());
}

// col is [C*k*k, H*W]; zero padding (k-1)/2 keeps the output the input size.
template <typename T>
void im2col(const T* x, int C, int H, int W, int k, std::vector<T>& col) {
    const int pad = (k - 1) / 2;
    const size_t hw = static_cast<size_t>(H) * W;
    size_t row = 0;
    for (int c = 0; c < C; ++c) {
        const T* xc = x + static_cast<size_t>(c) * hw;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj, ++row) {
                T* dst = col.data() + row * hw;
                for (int oh = 0; oh < H; ++oh) {
                    const int ih = oh + ki - pad;
                    if (ih < 0 || ih >= H) {
                        std::memset(dst + static_cast<size_t>(oh) * W, 0, sizeof(T) * W);
                        continue;
                    }
                    const int jw0 = kj - pad;
                    T* drow = dst + static_cast<size_t>(oh) * W;
                    const T* srow = xc + static_cast<size_t>(ih) * W;
                    for (int ow = 0; ow < W; ++ow) {
                        const int iw = ow + jw0;
                        drow[ow] = (iw >= 0 && iw < W) ? srow[iw] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const std::vector<T>& col, int C, int H, int W, int k, T* gx) {
    const int pad = (k - 1) / 2;
    const size_t hw = static_cast<size_t>(H) * W;
    size_t row = 0;
    for (int c = 0; c < C; ++c) {
        T* gc = gx + static_cast<size_t>(c) * hw;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj, ++row) {
                const T* src = col.data() + row * hw;
                for (int oh = 0; oh < H; ++oh) {
                    const int ih = oh + ki - pad;
                    if (ih < 0 || ih >= H) continue;
                    const int jw0 = kj - pad;
                    const T* srow = src + static_cast<size_t>(oh) * W;
                    T* grow = gc + static_cast<size_t>(ih) * W;
                    for (int ow = 0; ow < W; ++ow) {
                        const int iw = ow + jw0;
                        if (iw >= 0 && iw < W) grow[iw] += srow[ow];
                    }
                }
            }
        }
    }
}

template <typename T>
void check_even_spatial(const TensorT<T>& x, const char* what) {
    if (x.rank() != 4) throw ShapeError(std::string(what) + ": input must be rank 4, got " + x.shape_str());
    if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
        throw ShapeError(std::string(what) + ": spatial dims must be even, got " + x.shape_str());
}

}  // namespace

template <typename T>
ParamSet<T> xavier_init(const LayerSpec& spec, uint64_t seed) {
    ParamSet<T> out;
    Rng rng = make_rng(seed);
    auto fill_uniform = [&rng](TensorT<T>& t, double limit) {
        std::uniform_real_distribution<T> dist(static_cast<T>(-limit), static_cast<T>(limit));
        for (size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    };
    switch (spec.kind) {
        case LayerKind::Conv2d: {
            const int k = spec.kernel;
            TensorT<T> w({spec.filters, spec.in_channels, k, k});
            const double fan_in = static_cast<double>(spec.in_channels) * k * k;
            const double fan_out = static_cast<double>(spec.filters) * k * k;
            fill_uniform(w, std::sqrt(6.0 / (fan_in + fan_out)));
            out.add("w", std::move(w));
            out.add("b", TensorT<T>({spec.filters}));
            break;
        }
        case LayerKind::Dense: {
            TensorT<T> w({spec.units, spec.fan_in});
            fill_uniform(w, std::sqrt(6.0 / (spec.fan_in + spec.units)));
            out.add("w", std::move(w));
            out.add("b", TensorT<T>({spec.units}));
            break;
        }
        case LayerKind::BatchNorm: {
            out.add("gamma", TensorT<T>::full({spec.in_channels}, T(1)), true, false);
            out.add("beta", TensorT<T>({spec.in_channels}), true, false);
            out.add("running_mean", TensorT<T>({spec.in_channels}), false, false);
            out.add("running_var", TensorT<T>::full({spec.in_channels}, T(1)), false, false);
            break;
        }
        default:
            break;  // parameterless layer
    }
    return out;
}

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    check_conv_args(x, w, b);
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int F = w.dim(0), k = w.dim(2);
    const int ckk = C * k * k;
    const size_t hw = static_cast<size_t>(H) * W;

    TensorT<T> y({B, F, H, W});
    std::vector<T> col(static_cast<size_t>(ckk) * hw);
    for (int bi = 0; bi < B; ++bi) {
        im2col(x.data() + x.offset(bi, 0, 0, 0), C, H, W, k, col);
        T* yb = y.data() + y.offset(bi, 0, 0, 0);
        blas::gemm(false, false, F, static_cast<int>(hw), ckk, T(1), w.data(), ckk, col.data(),
                   static_cast<int>(hw), T(0), yb, static_cast<int>(hw));
        for (int f = 0; f < F; ++f) {
            const T bias = b[static_cast<size_t>(f)];
            T* row = yb + static_cast<size_t>(f) * hw;
            for (size_t i = 0; i < hw; ++i) row[i] += bias;
        }
    }
    return y;
}

template <typename T>
void conv2d_backward(const TensorT<T>& grad_out, const TensorT<T>& x, const TensorT<T>& w,
                     TensorT<T>& grad_x, TensorT<T>& grad_w, TensorT<T>& grad_b) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int F = w.dim(0), k = w.dim(2);
    require_shape(grad_out, {B, F, H, W}, "conv2d_backward grad_out");
    const int ckk = C * k * k;
    const size_t hw = static_cast<size_t>(H) * W;

    grad_x = TensorT<T>({B, C, H, W});
    grad_w = TensorT<T>({F, C, k, k});
    grad_b = TensorT<T>({F});

    std::vector<T> col(static_cast<size_t>(ckk) * hw);
    std::vector<T> gcol(static_cast<size_t>(ckk) * hw);
    for (int bi = 0; bi < B; ++bi) {
        const T* gyb = grad_out.data() + grad_out.offset(bi, 0, 0, 0);
        for (int f = 0; f < F; ++f) {
            T acc = 0;
            const T* row = gyb + static_cast<size_t>(f) * hw;
            for (size_t i = 0; i < hw; ++i) acc += row[i];
            grad_b[static_cast<size_t>(f)] += acc;
        }
        im2col(x.data() + x.offset(bi, 0, 0, 0), C, H, W, k, col);
        blas::gemm(false, true, F, ckk, static_cast<int>(hw), T(1), gyb, static_cast<int>(hw),
                   col.data(), static_cast<int>(hw), T(1), grad_w.data(), ckk);
        blas::gemm(true, false, ckk, static_cast<int>(hw), F, T(1), w.data(), ckk, gyb,
                   static_cast<int>(hw), T(0), gcol.data(), static_cast<int>(hw));
        col2im_add(gcol, C, H, W, k, grad_x.data() + grad_x.offset(bi, 0, 0, 0));
    }
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    TensorT<T> y = x;
    for (size_t i = 0; i < y.size(); ++i)
        if (y[i] < T(0)) y[i] = T(0);
    return y;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& grad_out, const TensorT<T>& x) {
    require_same_shape(grad_out, x, "relu_backward");
    TensorT<T> gx = grad_out;
    // subgradient 0 at exactly x == 0
    for (size_t i = 0; i < gx.size(); ++i)
        if (x[i] <= T(0)) gx[i] = T(0);
    return gx;
}

template <typename T>
TensorT<T> maxpool2x2(const TensorT<T>& x, std::vector<int64_t>& argmax) {
    check_even_spatial(x, "maxpool2x2");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int OH = H / 2, OW = W / 2;
    TensorT<T> y({B, C, OH, OW});
    argmax.assign(y.size(), 0);
    size_t o = 0;
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow, ++o) {
                    size_t base = x.offset(bi, c, oh * 2, ow * 2);
                    T best = x[base];
                    size_t best_idx = base;
                    const size_t cand[3] = {base + 1, base + static_cast<size_t>(W),
                                            base + static_cast<size_t>(W) + 1};
                    for (size_t idx : cand)
                        if (x[idx] > best) {
                            best = x[idx];
                            best_idx = idx;
                        }
                    y[o] = best;
                    argmax[o] = static_cast<int64_t>(best_idx);
                }
    return y;
}

template <typename T>
TensorT<T> maxpool2x2_backward(const TensorT<T>& grad_out, const std::vector<int64_t>& argmax,
                               const std::vector<int>& x_shape) {
    if (grad_out.size() != argmax.size())
        throw ShapeError("maxpool2x2_backward: grad/argmax size mismatch");
    TensorT<T> gx(x_shape);
    for (size_t i = 0; i < argmax.size(); ++i) gx[static_cast<size_t>(argmax[i])] += grad_out[i];
    return gx;
}

template <typename T>
TensorT<T> quadrant_pool(const TensorT<T>& x) {
    check_even_spatial(x, "quadrant_pool");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int HH = H / 2, HW2 = W / 2;
    const T inv_area = T(1) / (static_cast<T>(HH) * static_cast<T>(HW2));
    TensorT<T> y({B, C, 2, 2});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
            for (int qi = 0; qi < 2; ++qi)
                for (int qj = 0; qj < 2; ++qj) {
                    T acc = 0;
                    for (int i = qi * HH; i < (qi + 1) * HH; ++i)
                        for (int j = qj * HW2; j < (qj + 1) * HW2; ++j) acc += x.at(bi, c, i, j);
                    y.at(bi, c, qi, qj) = acc * inv_area;
                }
    return y;
}

template <typename T>
TensorT<T> quadrant_pool_backward(const TensorT<T>& grad_out, const std::vector<int>& x_shape) {
    const int B = x_shape[0], C = x_shape[1], H = x_shape[2], W = x_shape[3];
    require_shape(grad_out, {B, C, 2, 2}, "quadrant_pool_backward grad_out");
    const int HH = H / 2, HW2 = W / 2;
    const T inv_area = T(1) / (static_cast<T>(HH) * static_cast<T>(HW2));
    TensorT<T> gx({B, C, H, W});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
            for (int qi = 0; qi < 2; ++qi)
                for (int qj = 0; qj < 2; ++qj) {
                    const T g = grad_out.at(bi, c, qi, qj) * inv_area;
                    for (int i = qi * HH; i < (qi + 1) * HH; ++i)
                        for (int j = qj * HW2; j < (qj + 1) * HW2; ++j) gx.at(bi, c, i, j) = g;
                }
    return gx;
}

template <typename T>
TensorT<T> batchnorm_forward(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                             TensorT<T>& running_mean, TensorT<T>& running_var, bool train,
                             BatchNormCache<T>* cache) {
    if (x.rank() != 4) throw ShapeError("batchnorm: input must be rank 4, got " + x.shape_str());
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require_shape(gamma, {C}, "batchnorm gamma");
    require_shape(beta, {C}, "batchnorm beta");
    require_shape(running_mean, {C}, "batchnorm running_mean");
    require_shape(running_var, {C}, "batchnorm running_var");
    if (train && B < 2) throw DataError("batchnorm: train mode needs batch size >= 2, got " + std::to_string(B));

    const size_t hw = static_cast<size_t>(H) * W;
    const double n = static_cast<double>(B) * static_cast<double>(hw);
    TensorT<T> y({B, C, H, W});
    if (cache) {
        cache->xhat = TensorT<T>({B, C, H, W});
        cache->inv_std.assign(static_cast<size_t>(C), T(0));
    }

    for (int c = 0; c < C; ++c) {
        double mean, var;
        if (train) {
            double sum = 0, sq = 0;
            for (int bi = 0; bi < B; ++bi) {
                const T* p = x.data() + x.offset(bi, c, 0, 0);
                for (size_t i = 0; i < hw; ++i) {
                    sum += p[i];
                    sq += static_cast<double>(p[i]) * p[i];
                }
            }
            mean = sum / n;
            var = sq / n - mean * mean;
            if (var < 0) var = 0;
            running_mean[static_cast<size_t>(c)] =
                static_cast<T>(kBatchNormMomentum * running_mean[static_cast<size_t>(c)] +
                               (1.0 - kBatchNormMomentum) * mean);
            running_var[static_cast<size_t>(c)] =
                static_cast<T>(kBatchNormMomentum * running_var[static_cast<size_t>(c)] +
                               (1.0 - kBatchNormMomentum) * var);
        } else {
            mean = running_mean[static_cast<size_t>(c)];
            var = running_var[static_cast<size_t>(c)];
        }
        const T inv_std = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
        const T g = gamma[static_cast<size_t>(c)];
        const T bt = beta[static_cast<size_t>(c)];
        const T m = static_cast<T>(mean);
        if (cache) cache->inv_std[static_cast<size_t>(c)] = inv_std;
        for (int bi = 0; bi < B; ++bi) {
            const T* p = x.data() + x.offset(bi, c, 0, 0);
            T* q = y.data() + y.offset(bi, c, 0, 0);
            T* xh = cache ? cache->xhat.data() + cache->xhat.offset(bi, c, 0, 0) : nullptr;
            for (size_t i = 0; i < hw; ++i) {
                const T xhat = (p[i] - m) * inv_std;
                if (xh) xh[i] = xhat;
                q[i] = g * xhat + bt;
            }
        }
    }
    return y;
}

template <typename T>
void batchnorm_backward(const TensorT<T>& grad_out, const BatchNormCache<T>& cache,
                        const TensorT<T>& gamma, TensorT<T>& grad_x, TensorT<T>& grad_gamma,
                        TensorT<T>& grad_beta) {
    require_same_shape(grad_out, cache.xhat, "batchnorm_backward");
    const int B = grad_out.dim(0), C = grad_out.dim(1), H = grad_out.dim(2), W = grad_out.dim(3);
    const size_t hw = static_cast<size_t>(H) * W;
    const double n = static_cast<double>(B) * static_cast<double>(hw);

    grad_x = TensorT<T>({B, C, H, W});
    grad_gamma = TensorT<T>({C});
    grad_beta = TensorT<T>({C});

    for (int c = 0; c < C; ++c) {
        double sum_gy = 0, sum_gy_xhat = 0;
        for (int bi = 0; bi < B; ++bi) {
            const T* gy = grad_out.data() + grad_out.offset(bi, c, 0, 0);
            const T* xh = cache.xhat.data() + cache.xhat.offset(bi, c, 0, 0);
            for (size_t i = 0; i < hw; ++i) {
                sum_gy += gy[i];
                sum_gy_xhat += static_cast<double>(gy[i]) * xh[i];
            }
        }
        grad_gamma[static_cast<size_t>(c)] = static_cast<T>(sum_gy_xhat);
        grad_beta[static_cast<size_t>(c)] = static_cast<T>(sum_gy);
        const double scale = gamma[static_cast<size_t>(c)] *
                             static_cast<double>(cache.inv_std[static_cast<size_t>(c)]) / n;
        for (int bi = 0; bi < B; ++bi) {
            const T* gy = grad_out.data() + grad_out.offset(bi, c, 0, 0);
            const T* xh = cache.xhat.data() + cache.xhat.offset(bi, c, 0, 0);
            T* gx = grad_x.data() + grad_x.offset(bi, c, 0, 0);
            for (size_t i = 0; i < hw; ++i)
                gx[i] = static_cast<T>(scale * (n * gy[i] - sum_gy - xh[i] * sum_gy_xhat));
        }
    }
}

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    if (x.rank() != 2 || w.rank() != 2)
        throw ShapeError("dense: need x [B,fan_in] and w [units,fan_in], got " + x.shape_str() +
                         " and " + w.shape_str());
    const int B = x.dim(0), fan_in = x.dim(1), units = w.dim(0);
    if (w.dim(1) != fan_in)
        throw ShapeError("dense: fan_in mismatch, x " + x.shape_str() + " vs w " + w.shape_str());
    require_shape(b, {units}, "dense bias");

    TensorT<T> y({B, units});
    blas::gemm(false, true, B, units, fan_in, T(1), x.data(), fan_in, w.data(), fan_in, T(0),
               y.data(), units);
    for (int bi = 0; bi < B; ++bi)
        for (int u = 0; u < units; ++u) y.at(bi, u) += b[static_cast<size_t>(u)];
    return y;
}

template <typename T>
void dense_backward(const TensorT<T>& grad_out, const TensorT<T>& x, const TensorT<T>& w,
                    TensorT<T>& grad_x, TensorT<T>& grad_w, TensorT<T>& grad_b) {
    const int B = x.dim(0), fan_in = x.dim(1), units = w.dim(0);
    require_shape(grad_out, {B, units}, "dense_backward grad_out");
    grad_x = TensorT<T>({B, fan_in});
    grad_w = TensorT<T>({units, fan_in});
    grad_b = TensorT<T>({units});
    blas::gemm(false, false, B, fan_in, units, T(1), grad_out.data(), units, w.data(), fan_in, T(0),
               grad_x.data(), fan_in);
    blas::gemm(true, false, units, fan_in, B, T(1), grad_out.data(), units, x.data(), fan_in, T(0),
               grad_w.data(), fan_in);
    for (int bi = 0; bi < B; ++bi)
        for (int u = 0; u < units; ++u) grad_b[static_cast<size_t>(u)] += grad_out.at(bi, u);
}

template <typename T>
TensorT<T> dropout_forward(const TensorT<T>& x, double p, bool train, uint64_t seed,
                           TensorT<T>* mask) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: probability must be in [0,1), got " + std::to_string(p));
    if (mask) *mask = TensorT<T>::full(x.shape(), T(1));
    if (!train || p == 0.0) return x;

    TensorT<T> y = x;
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (size_t i = 0; i < y.size(); ++i) {
        if (dist(rng) < p) {
            y[i] = T(0);
            if (mask) (*mask)[i] = T(0);
        } else {
            y[i] *= scale;
        }
    }
    return y;
}

template <typename T>
TensorT<T> softmax(const TensorT<T>& logits) {
    if (logits.rank() != 2 || logits.dim(1) < 2)
        throw ShapeError("softmax: need [B,K] with K >= 2, got " + logits.shape_str());
    const int B = logits.dim(0), K = logits.dim(1);
    TensorT<T> probs({B, K});
    for (int bi = 0; bi < B; ++bi) {
        const T* in = logits.data() + logits.offset(bi, 0);
        T* out = probs.data() + probs.offset(bi, 0);
        T mx = in[0];
        for (int j = 1; j < K; ++j) mx = std::max(mx, in[j]);
        double denom = 0;
        for (int j = 0; j < K; ++j) {
            const double e = std::exp(static_cast<double>(in[j] - mx));
            out[j] = static_cast<T>(e);
            denom += e;
        }
        const double inv = 1.0 / denom;
        for (int j = 0; j < K; ++j) out[j] = static_cast<T>(out[j] * inv);
    }
    return probs;
}

#define VA_INSTANTIATE_LAYERS(T)                                                                  \
    template ParamSet<T> xavier_init<T>(const LayerSpec&, uint64_t);                              \
    template TensorT<T> conv2d_forward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&); \
    template void conv2d_backward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,     \
                                     TensorT<T>&, TensorT<T>&, TensorT<T>&);                      \
    template TensorT<T> relu<T>(const TensorT<T>&);                                               \
    template TensorT<T> relu_backward<T>(const TensorT<T>&, const TensorT<T>&);                   \
    template TensorT<T> maxpool2x2<T>(const TensorT<T>&, std::vector<int64_t>&);                  \
    template TensorT<T> maxpool2x2_backward<T>(const TensorT<T>&, const std::vector<int64_t>&,    \
                                               const std::vector<int>&);                          \
    template TensorT<T> quadrant_pool<T>(const TensorT<T>&);                                      \
    template TensorT<T> quadrant_pool_backward<T>(const TensorT<T>&, const std::vector<int>&);    \
    template TensorT<T> batchnorm_forward<T>(const TensorT<T>&, const TensorT<T>&,                \
                                             const TensorT<T>&, TensorT<T>&, TensorT<T>&, bool,   \
                                             BatchNormCache<T>*);                                 \
    template void batchnorm_backward<T>(const TensorT<T>&, const BatchNormCache<T>&,              \
                                        const TensorT<T>&, TensorT<T>&, TensorT<T>&,              \
                                        TensorT<T>&);                                             \
    template TensorT<T> dense_forward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&); \
    template void dense_backward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,      \
                                    TensorT<T>&, TensorT<T>&, TensorT<T>&);                       \
    template TensorT<T> dropout_forward<T>(const TensorT<T>&, double, bool, uint64_t,             \
                                           TensorT<T>*);                                          \
    template TensorT<T> softmax<T>(const TensorT<T>&);

VA_INSTANTIATE_LAYERS(float)
VA_INSTANTIATE_LAYERS(double)

}  // namespace va::nn
