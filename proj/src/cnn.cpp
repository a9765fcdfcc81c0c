#include "va/cnn.hpp"

#include <sstream>

#include "va/config.hpp"
#include "va/rng.hpp"

namespace va::nn {

void CnnSpec::validate() const {
    if (input_hw < 8 || input_hw % 8 != 0)
        throw ConfigError("cnn: input size must be a positive multiple of 8, got " +
                          std::to_string(input_hw));
    if (in_channels < 1) throw ConfigError("cnn: in_channels must be >= 1");
    for (int f : filters)
        if (f < 1) throw ConfigError("cnn: filter counts must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("cnn: kernel must be odd");
    if (dense_units < 1) throw ConfigError("cnn: dense_units must be >= 1");
    if (head == HeadKind::Classification && classes < 2)
        throw ConfigError("cnn: classification head needs >= 2 classes");
    if (drop_prob < 0.0 || drop_prob >= 1.0)
        throw ConfigError("cnn: drop_prob must be in [0,1)");
}

bool CnnSpec::is_reference() const {
    return input_hw == 96 && in_channels == 1 && filters == std::array<int, 3>{64, 128, 256} &&
           kernel == 5 && dense_units == 300 && drop_prob == 0.5 &&
           (head == HeadKind::Regression || classes == 8);
}

std::vector<LayerSpec> CnnSpec::stack() const {
    std::vector<LayerSpec> s;
    s.push_back(LayerSpec::batchnorm(in_channels));
    s.push_back(LayerSpec::conv2d(in_channels, filters[0], kernel));
    s.push_back(LayerSpec::relu());
    s.push_back(LayerSpec::maxpool());
    s.push_back(LayerSpec::conv2d(filters[0], filters[1], kernel));
    s.push_back(LayerSpec::relu());
    s.push_back(LayerSpec::maxpool());
    s.push_back(LayerSpec::conv2d(filters[1], filters[2], kernel));
    s.push_back(LayerSpec::relu());
    s.push_back(LayerSpec::quadrantpool());
    s.push_back(LayerSpec::dense(dense_fan_in(), dense_units));
    s.push_back(LayerSpec::relu());
    s.push_back(LayerSpec::dropout(drop_prob));
    s.push_back(LayerSpec::dense(dense_units, head_units()));
    if (head == HeadKind::Classification) s.push_back(LayerSpec::softmax());
    return s;
}

template <typename T>
CnnModel<T>::CnnModel(CnnSpec spec) : spec_(spec) {
    spec_.validate();
    build_params();
}

template <typename T>
void CnnModel<T>::build_params() {
    params_ = ParamSet<T>();
    auto absorb = [this](const std::string& prefix, ParamSet<T>&& layer) {
        for (auto& e : layer.entries)
            params_.add(prefix + "." + e.name, std::move(e.tensor), e.trainable, e.decay);
    };
    absorb("bn", xavier_init<T>(LayerSpec::batchnorm(spec_.in_channels), 0));
    absorb("conv1", xavier_init<T>(LayerSpec::conv2d(spec_.in_channels, spec_.filters[0], spec_.kernel), 0));
    absorb("conv2", xavier_init<T>(LayerSpec::conv2d(spec_.filters[0], spec_.filters[1], spec_.kernel), 0));
    absorb("conv3", xavier_init<T>(LayerSpec::conv2d(spec_.filters[1], spec_.filters[2], spec_.kernel), 0));
    absorb("fc", xavier_init<T>(LayerSpec::dense(spec_.dense_fan_in(), spec_.dense_units), 0));
    absorb("head", xavier_init<T>(LayerSpec::dense(spec_.dense_units, spec_.head_units()), 0));

    bn_gamma_ = params_.index_of("bn.gamma");
    bn_beta_ = params_.index_of("bn.beta");
    bn_mean_ = params_.index_of("bn.running_mean");
    bn_var_ = params_.index_of("bn.running_var");
    for (int i = 0; i < 3; ++i) {
        conv_w_[static_cast<size_t>(i)] = params_.index_of("conv" + std::to_string(i + 1) + ".w");
        conv_b_[static_cast<size_t>(i)] = params_.index_of("conv" + std::to_string(i + 1) + ".b");
    }
    fc_w_ = params_.index_of("fc.w");
    fc_b_ = params_.index_of("fc.b");
    head_w_ = params_.index_of("head.w");
    head_b_ = params_.index_of("head.b");
}

template <typename T>
void CnnModel<T>::init(uint64_t seed) {
    auto fill = [this, seed](const char* prefix, const LayerSpec& layer, uint64_t stream) {
        ParamSet<T> fresh = xavier_init<T>(layer, derive_seed(seed, stream));
        for (auto& e : fresh.entries)
            params_.find(std::string(prefix) + "." + e.name) = std::move(e.tensor);
    };
    fill("bn", LayerSpec::batchnorm(spec_.in_channels), 1);
    fill("conv1", LayerSpec::conv2d(spec_.in_channels, spec_.filters[0], spec_.kernel), 2);
    fill("conv2", LayerSpec::conv2d(spec_.filters[0], spec_.filters[1], spec_.kernel), 3);
    fill("conv3", LayerSpec::conv2d(spec_.filters[1], spec_.filters[2], spec_.kernel), 4);
    fill("fc", LayerSpec::dense(spec_.dense_fan_in(), spec_.dense_units), 5);
    fill("head", LayerSpec::dense(spec_.dense_units, spec_.head_units()), 6);
}

namespace {

// relu output is cached instead of its input; the mask y > 0 matches x > 0
// with subgradient 0 at the kink.
template <typename T>
TensorT<T> relu_backward_from_output(const TensorT<T>& grad_out, const TensorT<T>& y) {
    TensorT<T> g = grad_out;
    for (size_t i = 0; i < g.size(); ++i)
        if (y[i] <= T(0)) g[i] = T(0);
    return g;
}

}  // namespace

template <typename T>
TensorT<T> CnnModel<T>::forward(const TensorT<T>& x, bool train, uint64_t dropout_seed,
                                CnnCache<T>* cache) const {
    require_shape(x, {x.dim(0), spec_.in_channels, spec_.input_hw, spec_.input_hw}, "cnn input");
    CnnCache<T> local;
    CnnCache<T>& c = cache ? *cache : local;
    auto& self = const_cast<CnnModel<T>&>(*this);

    c.input = x;
    c.bn_out = batchnorm_forward(x, params_.tensor(bn_gamma_), params_.tensor(bn_beta_),
                                 self.params_.tensor(bn_mean_), self.params_.tensor(bn_var_),
                                 train, &c.bn);
    c.r1 = relu(conv2d_forward(c.bn_out, params_.tensor(conv_w_[0]), params_.tensor(conv_b_[0])));
    c.p1 = maxpool2x2(c.r1, c.am1);
    c.r2 = relu(conv2d_forward(c.p1, params_.tensor(conv_w_[1]), params_.tensor(conv_b_[1])));
    c.p2 = maxpool2x2(c.r2, c.am2);
    c.r3 = relu(conv2d_forward(c.p2, params_.tensor(conv_w_[2]), params_.tensor(conv_b_[2])));
    TensorT<T> q = quadrant_pool(c.r3);
    c.flat = reshape(q, {q.dim(0), spec_.dense_fan_in()});
    c.fc_pre = dense_forward(c.flat, params_.tensor(fc_w_), params_.tensor(fc_b_));
    c.features = relu(c.fc_pre);
    c.head_in = dropout_forward(c.features, spec_.drop_prob, train, dropout_seed, &c.drop_mask);
    TensorT<T> out = dense_forward(c.head_in, params_.tensor(head_w_), params_.tensor(head_b_));
    if (spec_.head == HeadKind::Classification) {
        c.logits = out;
        return softmax(out);
    }
    return out;
}

template <typename T>
TensorT<T> CnnModel<T>::backward(const TensorT<T>& grad_head, const CnnCache<T>& cache,
                                 ParamSet<T>& grads) const {
    if (grads.entries.size() != params_.entries.size()) grads = params_.zeros_like();

    TensorT<T> g_head_in, g_flat, g_bn;
    dense_backward(grad_head, cache.head_in, params_.tensor(head_w_), g_head_in,
                   grads.tensor(head_w_), grads.tensor(head_b_));

    // dropout backward: mask then rescale
    TensorT<T> g_feat = g_head_in;
    if (spec_.drop_prob > 0.0) {
        const T scale = static_cast<T>(1.0 / (1.0 - spec_.drop_prob));
        for (size_t i = 0; i < g_feat.size(); ++i) g_feat[i] *= cache.drop_mask[i] * scale;
    }

    TensorT<T> g_fc = relu_backward_from_output(g_feat, cache.features);
    dense_backward(g_fc, cache.flat, params_.tensor(fc_w_), g_flat, grads.tensor(fc_w_),
                   grads.tensor(fc_b_));

    const int B = cache.r3.dim(0);
    TensorT<T> g_q = reshape(g_flat, {B, spec_.filters[2], 2, 2});
    TensorT<T> g_r3 = quadrant_pool_backward(g_q, cache.r3.shape());
    TensorT<T> g_c3 = relu_backward_from_output(g_r3, cache.r3);
    TensorT<T> g_p2;
    conv2d_backward(g_c3, cache.p2, params_.tensor(conv_w_[2]), g_p2, grads.tensor(conv_w_[2]),
                    grads.tensor(conv_b_[2]));

    TensorT<T> g_r2 = maxpool2x2_backward(g_p2, cache.am2, cache.r2.shape());
    TensorT<T> g_c2 = relu_backward_from_output(g_r2, cache.r2);
    TensorT<T> g_p1;
    conv2d_backward(g_c2, cache.p1, params_.tensor(conv_w_[1]), g_p1, grads.tensor(conv_w_[1]),
                    grads.tensor(conv_b_[1]));

    TensorT<T> g_r1 = maxpool2x2_backward(g_p1, cache.am1, cache.r1.shape());
    TensorT<T> g_c1 = relu_backward_from_output(g_r1, cache.r1);
    conv2d_backward(g_c1, cache.bn_out, params_.tensor(conv_w_[0]), g_bn, grads.tensor(conv_w_[0]),
                    grads.tensor(conv_b_[0]));

    TensorT<T> g_x;
    batchnorm_backward(g_bn, cache.bn, params_.tensor(bn_gamma_), g_x, grads.tensor(bn_gamma_),
                       grads.tensor(bn_beta_));
    return g_x;
}

std::string cnn_spec_to_text(const CnnSpec& spec) {
    std::ostringstream os;
    os << "kind = cnn\n";
    os << "input = " << spec.input_hw << "\n";
    os << "channels = " << spec.in_channels << "\n";
    os << "filters = " << spec.filters[0] << "," << spec.filters[1] << "," << spec.filters[2] << "\n";
    os << "kernel = " << spec.kernel << "\n";
    os << "dense = " << spec.dense_units << "\n";
    os << "head = " << (spec.head == HeadKind::Regression ? "regression" : "classification") << "\n";
    os << "classes = " << spec.classes << "\n";
    os << "drop_prob = " << format_double(spec.drop_prob) << "\n";
    return os.str();
}

CnnSpec cnn_spec_from_text(const std::string& text) {
    KvConfig kv = KvConfig::parse_string(text, "checkpoint spec");
    if (kv.get_string("kind") != "cnn") throw DataError("checkpoint: expected kind = cnn");
    CnnSpec spec;
    spec.input_hw = kv.get_int("input");
    spec.in_channels = kv.get_int("channels");
    auto f = kv.get_int_list("filters");
    if (f.size() != 3) throw DataError("checkpoint: filters must have 3 entries");
    spec.filters = {f[0], f[1], f[2]};
    spec.kernel = kv.get_int("kernel");
    spec.dense_units = kv.get_int("dense");
    const std::string head = kv.get_string("head");
    if (head == "regression")
        spec.head = HeadKind::Regression;
    else if (head == "classification")
        spec.head = HeadKind::Classification;
    else
        throw DataError("checkpoint: unknown head '" + head + "'");
    spec.classes = kv.get_int("classes");
    spec.drop_prob = kv.get_double("drop_prob");
    spec.validate();
    return spec;
}

template class CnnModel<float>;
template class CnnModel<double>;

}  // namespace va::nn
