#include "va/rnn.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "va/blas.hpp"
#include "va/config.hpp"
#include "va/rng.hpp"

namespace va::nn {

namespace {

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

// out = W x + (U hprev) + b; U/hprev optional
template <typename T>
void cell_affine(const T* w, int h, int in, const T* x, const T* u, const T* hprev, const T* b,
                 T* out) {
    std::memcpy(out, b, sizeof(T) * static_cast<size_t>(h));
    blas::gemv(false, h, in, T(1), w, in, x, T(1), out);
    if (u && hprev) blas::gemv(false, h, h, T(1), u, h, hprev, T(1), out);
}

// grad_w += g (outer) x
template <typename T>
void add_outer(T* grad_w, const T* g, int h, const T* x, int in) {
    for (int i = 0; i < h; ++i) {
        const T gi = g[i];
        if (gi == T(0)) continue;
        T* row = grad_w + static_cast<size_t>(i) * in;
        for (int j = 0; j < in; ++j) row[j] += gi * x[j];
    }
}

template <typename T>
void check_vector(const TensorT<T>& v, int len, const char* what) {
    if (v.rank() != 1 || v.dim(0) != len)
        throw ShapeError(std::string(what) + ": expected [" + std::to_string(len) + "], got " +
                         v.shape_str());
}

}  // namespace

void RnnSpec::validate() const {
    if (layers.empty()) throw ConfigError("rnn: needs at least one layer");
    for (int w : layers)
        if (w < 1) throw ConfigError("rnn: layer widths must be >= 1");
    if (input_dim < 1 || output_dim < 1) throw ConfigError("rnn: bad input/output dims");
}

bool RnnSpec::is_reference() const {
    const bool shape_ok = layers == std::vector<int>{100} || layers == std::vector<int>{100, 100, 50};
    return shape_ok && input_dim == 300 && output_dim == 2;
}

template <typename T>
RnnModel<T>::RnnModel(RnnSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    build_params();
}

template <typename T>
void RnnModel<T>::build_params() {
    params_ = ParamSet<T>();
    layer_idx_.clear();
    const bool gru = spec_.cell == CellKind::Gru;
    for (size_t l = 0; l < spec_.layers.size(); ++l) {
        const int in = l == 0 ? spec_.input_dim : spec_.layers[l - 1];
        const int h = spec_.layers[l];
        const std::string p = "rnn" + std::to_string(l + 1) + ".";
        LayerIdx idx{};
        auto mat = [&](const char* name, int rows, int cols) {
            return params_.add(p + name, TensorT<T>({rows, cols}));
        };
        auto vec = [&](const char* name, int n) {
            return params_.add(p + name, TensorT<T>({n}), true, false);  // biases: no decay
        };
        if (gru) {
            idx.wz = mat("wz", h, in); idx.uz = mat("uz", h, h); idx.bz = vec("bz", h);
            idx.wr = mat("wr", h, in); idx.ur = mat("ur", h, h); idx.br = vec("br", h);
            idx.wh = mat("wh", h, in); idx.uh = mat("uh", h, h); idx.bh = vec("bh", h);
        } else {
            idx.wz = mat("w", h, in); idx.uz = mat("u", h, h); idx.bz = vec("b", h);
            idx.wr = idx.ur = idx.br = idx.wh = idx.uh = idx.bh = -1;
        }
        layer_idx_.push_back(idx);
    }
    const int top = spec_.layers.back();
    head_w_ = params_.add("head.w", TensorT<T>({spec_.output_dim, top}));
    head_b_ = params_.add("head.b", TensorT<T>({spec_.output_dim}), true, false);
}

template <typename T>
void RnnModel<T>::init(uint64_t seed) {
    uint64_t stream = 0;
    for (auto& e : params_.entries) {
        ++stream;
        if (e.tensor.rank() != 2) {
            e.tensor.fill(T(0));
            continue;
        }
        const int fan_out = e.tensor.dim(0), fan_in = e.tensor.dim(1);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Rng rng = make_rng(derive_seed(seed, stream));
        std::uniform_real_distribution<T> dist(static_cast<T>(-limit), static_cast<T>(limit));
        for (size_t i = 0; i < e.tensor.size(); ++i) e.tensor[i] = dist(rng);
    }
}

template <typename T>
TensorT<T> RnnModel<T>::forward(const TensorT<T>& window, RnnCache<T>* cache) const {
    if (window.rank() != 2 || window.dim(1) != spec_.input_dim)
        throw ShapeError("rnn: window must be [steps," + std::to_string(spec_.input_dim) +
                         "], got " + window.shape_str());
    const int steps = window.dim(0);
    if (window_ > 0 && steps != window_)
        throw ShapeError("rnn: expected window length " + std::to_string(window_) + ", got " +
                         std::to_string(steps));

    const size_t n_layers = spec_.layers.size();
    const bool gru = spec_.cell == CellKind::Gru;
    RnnCache<T> local;
    RnnCache<T>& c = cache ? *cache : local;
    c.window = window;
    c.h.assign(n_layers, {});
    if (gru) {
        c.z.assign(n_layers, {});
        c.r.assign(n_layers, {});
        c.hcand.assign(n_layers, {});
    }

    std::vector<T> az, ar, ah;
    for (size_t l = 0; l < n_layers; ++l) {
        const int in = l == 0 ? spec_.input_dim : spec_.layers[l - 1];
        const int h = spec_.layers[l];
        const LayerIdx& ix = layer_idx_[l];
        c.h[l].assign(static_cast<size_t>(steps) * h, T(0));
        if (gru) {
            c.z[l].assign(static_cast<size_t>(steps) * h, T(0));
            c.r[l].assign(static_cast<size_t>(steps) * h, T(0));
            c.hcand[l].assign(static_cast<size_t>(steps) * h, T(0));
        }
        az.assign(static_cast<size_t>(h), T(0));
        ar.assign(static_cast<size_t>(h), T(0));
        ah.assign(static_cast<size_t>(h), T(0));
        std::vector<T> rh(static_cast<size_t>(h));

        for (int t = 0; t < steps; ++t) {
            const T* x = l == 0 ? window.data() + static_cast<size_t>(t) * in
                                : c.h[l - 1].data() + static_cast<size_t>(t) * in;
            const T* hprev = t > 0 ? c.h[l].data() + static_cast<size_t>(t - 1) * h : nullptr;
            T* ht = c.h[l].data() + static_cast<size_t>(t) * h;
            if (!gru) {
                cell_affine(params_.tensor(ix.wz).data(), h, in, x, params_.tensor(ix.uz).data(),
                            hprev, params_.tensor(ix.bz).data(), az.data());
                for (int i = 0; i < h; ++i) ht[i] = std::tanh(az[i]);
            } else {
                cell_affine(params_.tensor(ix.wz).data(), h, in, x, params_.tensor(ix.uz).data(),
                            hprev, params_.tensor(ix.bz).data(), az.data());
                cell_affine(params_.tensor(ix.wr).data(), h, in, x, params_.tensor(ix.ur).data(),
                            hprev, params_.tensor(ix.br).data(), ar.data());
                T* zt = c.z[l].data() + static_cast<size_t>(t) * h;
                T* rt = c.r[l].data() + static_cast<size_t>(t) * h;
                T* hc = c.hcand[l].data() + static_cast<size_t>(t) * h;
                for (int i = 0; i < h; ++i) {
                    zt[i] = sigmoid(az[i]);
                    rt[i] = sigmoid(ar[i]);
                    rh[i] = hprev ? rt[i] * hprev[i] : T(0);
                }
                cell_affine(params_.tensor(ix.wh).data(), h, in, x, params_.tensor(ix.uh).data(),
                            hprev ? rh.data() : nullptr, params_.tensor(ix.bh).data(), ah.data());
                for (int i = 0; i < h; ++i) {
                    hc[i] = std::tanh(ah[i]);
                    const T hp = hprev ? hprev[i] : T(0);
                    ht[i] = (T(1) - zt[i]) * hp + zt[i] * hc[i];
                }
            }
        }
    }

    const int top = spec_.layers.back();
    const T* h_last = c.h[n_layers - 1].data() + static_cast<size_t>(steps - 1) * top;
    TensorT<T> y({spec_.output_dim});
    cell_affine(params_.tensor(head_w_).data(), spec_.output_dim, top, h_last, nullptr, nullptr,
                params_.tensor(head_b_).data(), y.data());
    return y;
}

template <typename T>
void RnnModel<T>::backward(const TensorT<T>& grad_y, const RnnCache<T>& cache,
                           ParamSet<T>& grads) const {
    check_vector(grad_y, spec_.output_dim, "rnn backward grad_y");
    if (grads.entries.size() != params_.entries.size()) grads = params_.zeros_like();

    const size_t n_layers = spec_.layers.size();
    const bool gru = spec_.cell == CellKind::Gru;
    const int steps = cache.window.dim(0);
    const int top = spec_.layers.back();
    const T* h_last = cache.h[n_layers - 1].data() + static_cast<size_t>(steps - 1) * top;

    add_outer(grads.tensor(head_w_).data(), grad_y.data(), spec_.output_dim, h_last, top);
    for (int o = 0; o < spec_.output_dim; ++o) grads.tensor(head_b_)[static_cast<size_t>(o)] += grad_y[static_cast<size_t>(o)];

    // gradient reaching the top layer's hidden sequence: head at the last step only
    std::vector<T> gseq(static_cast<size_t>(steps) * top, T(0));
    blas::gemv(true, spec_.output_dim, top, T(1), params_.tensor(head_w_).data(), top,
               grad_y.data(), T(1), gseq.data() + static_cast<size_t>(steps - 1) * top);

    for (size_t li = n_layers; li-- > 0;) {
        const int in = li == 0 ? spec_.input_dim : spec_.layers[li - 1];
        const int h = spec_.layers[li];
        const LayerIdx& ix = layer_idx_[li];
        std::vector<T> gseq_below;
        if (li > 0) gseq_below.assign(static_cast<size_t>(steps) * in, T(0));

        std::vector<T> g_future(static_cast<size_t>(h), T(0));
        std::vector<T> g_h(static_cast<size_t>(h)), g_a(static_cast<size_t>(h));
        std::vector<T> g_z(static_cast<size_t>(h)), g_r(static_cast<size_t>(h));
        std::vector<T> g_ah(static_cast<size_t>(h)), tmp(static_cast<size_t>(h));
        std::vector<T> rh(static_cast<size_t>(h)), g_hprev_acc(static_cast<size_t>(h));

        for (int t = steps - 1; t >= 0; --t) {
            const T* x = li == 0 ? cache.window.data() + static_cast<size_t>(t) * in
                                 : cache.h[li - 1].data() + static_cast<size_t>(t) * in;
            const T* hprev = t > 0 ? cache.h[li].data() + static_cast<size_t>(t - 1) * h : nullptr;
            const T* ht = cache.h[li].data() + static_cast<size_t>(t) * h;
            for (int i = 0; i < h; ++i)
                g_h[i] = gseq[static_cast<size_t>(t) * h + i] + g_future[i];
            T* gx = li > 0 ? gseq_below.data() + static_cast<size_t>(t) * in : nullptr;

            if (!gru) {
                for (int i = 0; i < h; ++i) g_a[i] = g_h[i] * (T(1) - ht[i] * ht[i]);
                for (int i = 0; i < h; ++i) grads.tensor(ix.bz)[static_cast<size_t>(i)] += g_a[i];
                add_outer(grads.tensor(ix.wz).data(), g_a.data(), h, x, in);
                if (hprev) add_outer(grads.tensor(ix.uz).data(), g_a.data(), h, hprev, h);
                if (gx)
                    blas::gemv(true, h, in, T(1), params_.tensor(ix.wz).data(), in, g_a.data(),
                               T(1), gx);
                std::fill(g_future.begin(), g_future.end(), T(0));
                if (t > 0)
                    blas::gemv(true, h, h, T(1), params_.tensor(ix.uz).data(), h, g_a.data(), T(1),
                               g_future.data());
            } else {
                const T* zt = cache.z[li].data() + static_cast<size_t>(t) * h;
                const T* rt = cache.r[li].data() + static_cast<size_t>(t) * h;
                const T* hc = cache.hcand[li].data() + static_cast<size_t>(t) * h;
                // h = (1-z) hprev + z hcand
                for (int i = 0; i < h; ++i) {
                    const T hp = hprev ? hprev[i] : T(0);
                    g_z[i] = g_h[i] * (hc[i] - hp);
                    g_ah[i] = g_h[i] * zt[i] * (T(1) - hc[i] * hc[i]);  // through tanh
                    g_hprev_acc[i] = g_h[i] * (T(1) - zt[i]);
                    rh[i] = hprev ? rt[i] * hp : T(0);
                }
                // candidate path
                for (int i = 0; i < h; ++i) grads.tensor(ix.bh)[static_cast<size_t>(i)] += g_ah[i];
                add_outer(grads.tensor(ix.wh).data(), g_ah.data(), h, x, in);
                if (hprev) add_outer(grads.tensor(ix.uh).data(), g_ah.data(), h, rh.data(), h);
                if (gx)
                    blas::gemv(true, h, in, T(1), params_.tensor(ix.wh).data(), in, g_ah.data(),
                               T(1), gx);
                std::fill(tmp.begin(), tmp.end(), T(0));
                blas::gemv(true, h, h, T(1), params_.tensor(ix.uh).data(), h, g_ah.data(), T(1),
                           tmp.data());  // grad wrt (r * hprev)
                for (int i = 0; i < h; ++i) {
                    const T hp = hprev ? hprev[i] : T(0);
                    g_r[i] = tmp[i] * hp;
                    g_hprev_acc[i] += tmp[i] * rt[i];
                }
                // update gate
                for (int i = 0; i < h; ++i) g_a[i] = g_z[i] * zt[i] * (T(1) - zt[i]);
                for (int i = 0; i < h; ++i) grads.tensor(ix.bz)[static_cast<size_t>(i)] += g_a[i];
                add_outer(grads.tensor(ix.wz).data(), g_a.data(), h, x, in);
                if (hprev) add_outer(grads.tensor(ix.uz).data(), g_a.data(), h, hprev, h);
                if (gx)
                    blas::gemv(true, h, in, T(1), params_.tensor(ix.wz).data(), in, g_a.data(),
                               T(1), gx);
                if (hprev)
                    blas::gemv(true, h, h, T(1), params_.tensor(ix.uz).data(), h, g_a.data(), T(1),
                               g_hprev_acc.data());
                // reset gate
                for (int i = 0; i < h; ++i) g_a[i] = g_r[i] * rt[i] * (T(1) - rt[i]);
                for (int i = 0; i < h; ++i) grads.tensor(ix.br)[static_cast<size_t>(i)] += g_a[i];
                add_outer(grads.tensor(ix.wr).data(), g_a.data(), h, x, in);
                if (hprev) add_outer(grads.tensor(ix.ur).data(), g_a.data(), h, hprev, h);
                if (gx)
                    blas::gemv(true, h, in, T(1), params_.tensor(ix.wr).data(), in, g_a.data(),
                               T(1), gx);
                if (hprev)
                    blas::gemv(true, h, h, T(1), params_.tensor(ix.ur).data(), h, g_a.data(), T(1),
                               g_hprev_acc.data());
                std::swap(g_future, g_hprev_acc);
            }
        }
        if (li > 0) gseq = std::move(gseq_below);
    }
}

template <typename T>
TensorT<T> simple_rnn_step(const TensorT<T>& x, const TensorT<T>& h_prev, const TensorT<T>& w,
                           const TensorT<T>& u, const TensorT<T>& b) {
    if (w.rank() != 2 || u.rank() != 2) throw ShapeError("simple_rnn_step: w/u must be matrices");
    const int h = w.dim(0), in = w.dim(1);
    check_vector(x, in, "simple_rnn_step x");
    check_vector(h_prev, h, "simple_rnn_step h_prev");
    require_shape(u, {h, h}, "simple_rnn_step u");
    check_vector(b, h, "simple_rnn_step b");
    TensorT<T> out({h});
    cell_affine(w.data(), h, in, x.data(), u.data(), h_prev.data(), b.data(), out.data());
    for (int i = 0; i < h; ++i) out[static_cast<size_t>(i)] = std::tanh(out[static_cast<size_t>(i)]);
    return out;
}

template <typename T>
TensorT<T> gru_step(const TensorT<T>& x, const TensorT<T>& h_prev, const GruLayerParams<T>& p) {
    if (p.wz.rank() != 2) throw ShapeError("gru_step: wz must be a matrix");
    const int h = p.wz.dim(0), in = p.wz.dim(1);
    check_vector(x, in, "gru_step x");
    check_vector(h_prev, h, "gru_step h_prev");
    require_shape(p.uz, {h, h}, "gru_step uz");
    require_shape(p.wr, {h, in}, "gru_step wr");
    require_shape(p.ur, {h, h}, "gru_step ur");
    require_shape(p.wh, {h, in}, "gru_step wh");
    require_shape(p.uh, {h, h}, "gru_step uh");
    check_vector(p.bz, h, "gru_step bz");
    check_vector(p.br, h, "gru_step br");
    check_vector(p.bh, h, "gru_step bh");

    std::vector<T> az(static_cast<size_t>(h)), ar(static_cast<size_t>(h)), ah(static_cast<size_t>(h)),
        rh(static_cast<size_t>(h));
    cell_affine(p.wz.data(), h, in, x.data(), p.uz.data(), h_prev.data(), p.bz.data(), az.data());
    cell_affine(p.wr.data(), h, in, x.data(), p.ur.data(), h_prev.data(), p.br.data(), ar.data());
    TensorT<T> out({h});
    for (int i = 0; i < h; ++i) rh[static_cast<size_t>(i)] = sigmoid(ar[static_cast<size_t>(i)]) * h_prev[static_cast<size_t>(i)];
    cell_affine(p.wh.data(), h, in, x.data(), p.uh.data(), rh.data(), p.bh.data(), ah.data());
    for (int i = 0; i < h; ++i) {
        const T z = sigmoid(az[static_cast<size_t>(i)]);
        const T hc = std::tanh(ah[static_cast<size_t>(i)]);
        out[static_cast<size_t>(i)] = (T(1) - z) * h_prev[static_cast<size_t>(i)] + z * hc;
    }
    return out;
}

std::string rnn_spec_to_text(const RnnSpec& spec, int window) {
    std::ostringstream os;
    os << "kind = rnn\n";
    os << "cell = " << (spec.cell == CellKind::Simple ? "simple" : "gru") << "\n";
    os << "layers = ";
    for (size_t i = 0; i < spec.layers.size(); ++i) os << (i ? "," : "") << spec.layers[i];
    os << "\n";
    os << "input = " << spec.input_dim << "\n";
    os << "output = " << spec.output_dim << "\n";
    os << "window = " << window << "\n";
    return os.str();
}

RnnSpec rnn_spec_from_text(const std::string& text, int* window_out) {
    KvConfig kv = KvConfig::parse_string(text, "checkpoint spec");
    if (kv.get_string("kind") != "rnn") throw DataError("checkpoint: expected kind = rnn");
    RnnSpec spec;
    const std::string cell = kv.get_string("cell");
    if (cell == "simple")
        spec.cell = CellKind::Simple;
    else if (cell == "gru")
        spec.cell = CellKind::Gru;
    else
        throw DataError("checkpoint: unknown cell '" + cell + "'");
    spec.layers = kv.get_int_list("layers");
    spec.input_dim = kv.get_int("input");
    spec.output_dim = kv.get_int("output");
    if (window_out) *window_out = kv.get_int("window");
    spec.validate();
    return spec;
}

template class RnnModel<float>;
template class RnnModel<double>;
template TensorT<float> simple_rnn_step<float>(const TensorT<float>&, const TensorT<float>&,
                                               const TensorT<float>&, const TensorT<float>&,
                                               const TensorT<float>&);
template TensorT<double> simple_rnn_step<double>(const TensorT<double>&, const TensorT<double>&,
                                                 const TensorT<double>&, const TensorT<double>&,
                                                 const TensorT<double>&);
template TensorT<float> gru_step<float>(const TensorT<float>&, const TensorT<float>&,
                                        const GruLayerParams<float>&);
template TensorT<double> gru_step<double>(const TensorT<double>&, const TensorT<double>&,
                                          const GruLayerParams<double>&);

}  // namespace va::nn
