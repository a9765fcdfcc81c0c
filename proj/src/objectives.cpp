#include "va/objectives.hpp"

#include <cmath>

namespace va {

namespace {

template <typename T>
SeriesStats stats_impl(std::span<const T> x, std::span<const T> y) {
    if (x.size() != y.size())
        throw DataError("series length mismatch: " + std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()));
    if (x.size() < 2) throw DataError("series needs at least 2 elements, got " + std::to_string(x.size()));
    const double n = static_cast<double>(x.size());
    SeriesStats s;
    for (size_t i = 0; i < x.size(); ++i) {
        s.mean_x += x[i];
        s.mean_y += y[i];
    }
    s.mean_x /= n;
    s.mean_y /= n;
    for (size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - s.mean_x;
        const double dy = y[i] - s.mean_y;
        s.var_x += dx * dx;
        s.var_y += dy * dy;
        s.cov += dx * dy;
    }
    s.var_x /= n;
    s.var_y /= n;
    s.cov /= n;
    return s;
}

template <typename T>
double ccc_impl(std::span<const T> x, std::span<const T> y) {
    const SeriesStats s = stats_impl(x, y);
    const double dm = s.mean_x - s.mean_y;
    const double denom = s.var_x + s.var_y + dm * dm;
    if (denom < kCccDegenerateEps) return 0.0;
    return 2.0 * s.cov / denom;
}

template <typename T>
void check_pair(const TensorT<T>& pred, const TensorT<T>& target) {
    if (pred.rank() != 2 || pred.dim(1) != 2)
        throw ShapeError("ccc_loss: predictions must be [N,2], got " + pred.shape_str());
    require_same_shape(pred, target, "ccc_loss");
    if (pred.dim(0) < 2) throw DataError("ccc_loss: needs N >= 2, got " + std::to_string(pred.dim(0)));
}

}  // namespace

SeriesStats series_stats(std::span<const double> x, std::span<const double> y) {
    return stats_impl(x, y);
}

double ccc(std::span<const double> x, std::span<const double> y) { return ccc_impl(x, y); }
double ccc(std::span<const float> x, std::span<const float> y) { return ccc_impl(x, y); }

template <typename T>
double ccc_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    check_pair(pred, target);
    const int n = pred.dim(0);
    std::vector<double> px(static_cast<size_t>(n)), py(static_cast<size_t>(n));
    double loss = 1.0;
    for (int col = 0; col < 2; ++col) {
        for (int i = 0; i < n; ++i) {
            px[static_cast<size_t>(i)] = pred.at(i, col);
            py[static_cast<size_t>(i)] = target.at(i, col);
        }
        loss -= 0.5 * ccc_impl<double>(px, py);
    }
    return loss;
}

template <typename T>
TensorT<T> ccc_loss_grad(const TensorT<T>& pred, const TensorT<T>& target) {
    check_pair(pred, target);
    const int n = pred.dim(0);
    const double dn = n;
    TensorT<T> grad({n, 2});
    std::vector<double> px(static_cast<size_t>(n)), py(static_cast<size_t>(n));
    for (int col = 0; col < 2; ++col) {
        for (int i = 0; i < n; ++i) {
            px[static_cast<size_t>(i)] = pred.at(i, col);
            py[static_cast<size_t>(i)] = target.at(i, col);
        }
        const SeriesStats s = stats_impl<double>(px, py);
        const double dm = s.mean_x - s.mean_y;
        const double denom = s.var_x + s.var_y + dm * dm;
        if (denom < kCccDegenerateEps) continue;  // rho defined as 0, flat
        const double rho = 2.0 * s.cov / denom;
        // d(rho)/dx_k = (2/(N*denom)) * ((y_k - mean_y) - rho*(x_k - mean_x) - rho*dm)
        const double c = 2.0 / (dn * denom);
        for (int i = 0; i < n; ++i) {
            const double drho = c * ((py[static_cast<size_t>(i)] - s.mean_y) -
                                     rho * (px[static_cast<size_t>(i)] - s.mean_x) - rho * dm);
            grad.at(i, col) = static_cast<T>(-0.5 * drho);
        }
    }
    return grad;
}

template <typename T>
double mse(const TensorT<T>& pred, const TensorT<T>& target) {
    require_same_shape(pred, target, "mse");
    if (pred.size() == 0) throw DataError("mse: empty input");
    double acc = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

template <typename T>
double rmse(const TensorT<T>& pred, const TensorT<T>& target) {
    return std::sqrt(mse(pred, target));
}

template <typename T>
TensorT<T> mse_grad(const TensorT<T>& pred, const TensorT<T>& target) {
    require_same_shape(pred, target, "mse_grad");
    if (pred.size() == 0) throw DataError("mse_grad: empty input");
    TensorT<T> g(pred.shape());
    const double scale = 2.0 / static_cast<double>(pred.size());
    for (size_t i = 0; i < pred.size(); ++i)
        g[i] = static_cast<T>(scale * (static_cast<double>(pred[i]) - target[i]));
    return g;
}

template <typename T>
double cross_entropy(const TensorT<T>& probs, const std::vector<int>& labels) {
    if (probs.rank() != 2) throw ShapeError("cross_entropy: probs must be [B,K]");
    const int b = probs.dim(0), k = probs.dim(1);
    if (labels.size() != static_cast<size_t>(b))
        throw DataError("cross_entropy: got " + std::to_string(labels.size()) + " labels for batch " +
                        std::to_string(b));
    if (b == 0) throw DataError("cross_entropy: empty batch");
    double acc = 0;
    for (int i = 0; i < b; ++i) {
        const int label = labels[static_cast<size_t>(i)];
        if (label < 0 || label >= k)
            throw DataError("cross_entropy: label " + std::to_string(label) + " out of range [0," +
                            std::to_string(k) + ")");
        const double p = std::max(static_cast<double>(probs.at(i, label)), 1e-12);
        acc -= std::log(p);
    }
    return acc / b;
}

template <typename T>
TensorT<T> softmax_ce_grad(const TensorT<T>& probs, const std::vector<int>& labels) {
    const int b = probs.dim(0), k = probs.dim(1);
    if (labels.size() != static_cast<size_t>(b)) throw DataError("softmax_ce_grad: label count mismatch");
    TensorT<T> g = probs;
    const T inv_b = T(1) / static_cast<T>(b);
    for (int i = 0; i < b; ++i) {
        const int label = labels[static_cast<size_t>(i)];
        if (label < 0 || label >= k) throw DataError("softmax_ce_grad: label out of range");
        g.at(i, label) -= T(1);
        for (int j = 0; j < k; ++j) g.at(i, j) *= inv_b;
    }
    return g;
}

int64_t ConfusionMatrix::total() const {
    int64_t t = 0;
    for (int64_t c : cells) t += c;
    return t;
}

int64_t ConfusionMatrix::trace() const {
    int64_t t = 0;
    for (int i = 0; i < k; ++i) t += at(i, i);
    return t;
}

int64_t ConfusionMatrix::row_sum(int truth) const {
    int64_t t = 0;
    for (int j = 0; j < k; ++j) t += at(truth, j);
    return t;
}

double ConfusionMatrix::recall(int truth) const {
    const int64_t n = row_sum(truth);
    if (n == 0) return -1.0;
    return static_cast<double>(at(truth, truth)) / static_cast<double>(n);
}

std::pair<ConfusionMatrix, double> confusion_and_accuracy(const std::vector<int>& preds,
                                                          const std::vector<int>& truths, int k) {
    if (preds.size() != truths.size())
        throw DataError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(truths.size()) + " truths");
    if (preds.empty()) throw DataError("confusion: empty input");
    if (k < 1) throw DataError("confusion: needs k >= 1");
    ConfusionMatrix m(k);
    for (size_t i = 0; i < preds.size(); ++i) {
        const int t = truths[i], p = preds[i];
        if (t < 0 || t >= k || p < 0 || p >= k)
            throw DataError("confusion: label out of range at sample " + std::to_string(i));
        ++m.at(t, p);
    }
    const double acc = static_cast<double>(m.trace()) / static_cast<double>(m.total());
    return {m, acc};
}

#define VA_INSTANTIATE_OBJECTIVES(T)                                               \
    template double ccc_loss<T>(const TensorT<T>&, const TensorT<T>&);             \
    template TensorT<T> ccc_loss_grad<T>(const TensorT<T>&, const TensorT<T>&);    \
    template double mse<T>(const TensorT<T>&, const TensorT<T>&);                  \
    template double rmse<T>(const TensorT<T>&, const TensorT<T>&);                 \
    template TensorT<T> mse_grad<T>(const TensorT<T>&, const TensorT<T>&);         \
    template double cross_entropy<T>(const TensorT<T>&, const std::vector<int>&);  \
    template TensorT<T> softmax_ce_grad<T>(const TensorT<T>&, const std::vector<int>&);

VA_INSTANTIATE_OBJECTIVES(float)
VA_INSTANTIATE_OBJECTIVES(double)

}  // namespace va
