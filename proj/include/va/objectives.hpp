#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "va/tensor.hpp"

namespace va {

// Population (divide-by-N) statistics of a prediction/label series pair.
struct SeriesStats {
    double mean_x = 0, mean_y = 0;
    double var_x = 0, var_y = 0;
    double cov = 0;
};

SeriesStats series_stats(std::span<const double> x, std::span<const double> y);

inline constexpr double kCccDegenerateEps = 1e-12;

// Concordance correlation: 2*cov / (var_x + var_y + (mean_x - mean_y)^2).
// Degenerate denominators (both series constant and equal) return 0.
double ccc(std::span<const double> x, std::span<const double> y);
double ccc(std::span<const float> x, std::span<const float> y);

// Loss 1 - (ccc_valence + ccc_arousal)/2 over [N,2] prediction/target pairs,
// column 0 = valence, column 1 = arousal.
template <typename T>
double ccc_loss(const TensorT<T>& pred, const TensorT<T>& target);
template <typename T>
TensorT<T> ccc_loss_grad(const TensorT<T>& pred, const TensorT<T>& target);

template <typename T>
double mse(const TensorT<T>& pred, const TensorT<T>& target);
template <typename T>
double rmse(const TensorT<T>& pred, const TensorT<T>& target);
template <typename T>
TensorT<T> mse_grad(const TensorT<T>& pred, const TensorT<T>& target);

// Mean of -log(prob of true class), probabilities clamped at 1e-12.
template <typename T>
double cross_entropy(const TensorT<T>& probs, const std::vector<int>& labels);
// Fused softmax + cross-entropy gradient w.r.t. logits: (probs - onehot)/B.
template <typename T>
TensorT<T> softmax_ce_grad(const TensorT<T>& probs, const std::vector<int>& labels);

struct ConfusionMatrix {
    int k = 0;
    std::vector<int64_t> cells;  // rows = true class, cols = predicted

    explicit ConfusionMatrix(int classes = 0) : k(classes), cells(static_cast<size_t>(classes) * classes, 0) {}
    int64_t& at(int truth, int pred) { return cells[static_cast<size_t>(truth) * k + pred]; }
    int64_t at(int truth, int pred) const { return cells[static_cast<size_t>(truth) * k + pred]; }
    int64_t total() const;
    int64_t trace() const;
    int64_t row_sum(int truth) const;
    // diag / row_sum; -1 when the class has no samples
    double recall(int truth) const;
};

std::pair<ConfusionMatrix, double> confusion_and_accuracy(const std::vector<int>& preds,
                                                          const std::vector<int>& truths, int k);

}  // namespace va
