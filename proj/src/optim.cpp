#include "va/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "va/config.hpp"
#include "va/image.hpp"
#include "va/rng.hpp"

namespace va {

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "ccc") return LossKind::Ccc;
    if (s == "mse") return LossKind::Mse;
    if (s == "cross_entropy") return LossKind::CrossEntropy;
    throw ConfigError("unknown loss '" + s + "' (expected ccc, mse or cross_entropy)");
}

std::string loss_kind_to_string(LossKind k) {
    switch (k) {
        case LossKind::Ccc: return "ccc";
        case LossKind::Mse: return "mse";
        case LossKind::CrossEntropy: return "cross_entropy";
    }
    return "ccc";
}

void TrainConfig::validate() const {
    if (!(lr > 0)) throw ConfigError("train: lr must be > 0");
    if (momentum < 0 || momentum >= 1) throw ConfigError("train: momentum must be in [0,1)");
    if (weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (loss == LossKind::Ccc && batch_size < 2)
        throw ConfigError("train: ccc loss needs batch_size >= 2");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
}

template <typename T>
void sgd_step(nn::ParamSet<T>& params, const nn::ParamSet<T>& grads, nn::ParamSet<T>& velocity,
              const TrainConfig& cfg) {
    if (grads.entries.size() != params.entries.size() ||
        velocity.entries.size() != params.entries.size())
        throw ShapeError("sgd_step: parameter/gradient/velocity layouts differ");
    const T lr = static_cast<T>(cfg.lr);
    const T mom = static_cast<T>(cfg.momentum);
    const T wd = static_cast<T>(cfg.weight_decay);
    for (size_t e = 0; e < params.entries.size(); ++e) {
        auto& p = params.entries[e];
        if (!p.trainable) continue;
        const auto& g = grads.entries[e].tensor;
        auto& v = velocity.entries[e].tensor;
        if (!p.tensor.same_shape(g) || !p.tensor.same_shape(v))
            throw ShapeError("sgd_step: shape mismatch for " + p.name + ": param " +
                             p.tensor.shape_str() + ", grad " + g.shape_str() + ", velocity " +
                             v.shape_str());
        const T decay = p.decay ? wd : T(0);
        for (size_t i = 0; i < p.tensor.size(); ++i) {
            const T step = g[i] + decay * p.tensor[i];
            v[i] = mom * v[i] + step;
            p.tensor[i] -= lr * v[i];
        }
    }
}

template void sgd_step<float>(nn::ParamSet<float>&, const nn::ParamSet<float>&,
                              nn::ParamSet<float>&, const TrainConfig&);
template void sgd_step<double>(nn::ParamSet<double>&, const nn::ParamSet<double>&,
                               nn::ParamSet<double>&, const TrainConfig&);

TrainLog train_loop(const TrainConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    TrainLog log;
    Rng rng = make_rng(cfg.seed);
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<float> best_params;
    int epochs_since_improve = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double train_loss = hooks.run_train_epoch(rng);
        if (!std::isfinite(train_loss))
            throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
        EpochStats stats = hooks.evaluate();
        stats.train_loss = train_loss;
        if (!std::isfinite(stats.val_loss))
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        log.rows.push_back({epoch, stats});

        if (stats.val_loss < best_loss) {
            best_loss = stats.val_loss;
            log.best_epoch = epoch;
            best_params = hooks.snapshot();
            epochs_since_improve = 0;
        } else {
            ++epochs_since_improve;
            if (epochs_since_improve >= cfg.patience) break;
        }
    }
    if (!best_params.empty()) hooks.restore(best_params);
    return log;
}

void save_train_log(const std::string& path, const TrainLog& log, bool classification) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write train log: " + path);
    if (classification) {
        out << "epoch,train_loss,val_loss,val_accuracy\n";
        for (const auto& row : log.rows)
            out << row.epoch << ',' << format_double(row.stats.train_loss) << ','
                << format_double(row.stats.val_loss) << ','
                << format_double(row.stats.val_accuracy) << "\n";
    } else {
        out << "epoch,train_loss,val_loss,val_ccc_v,val_ccc_a\n";
        for (const auto& row : log.rows)
            out << row.epoch << ',' << format_double(row.stats.train_loss) << ','
                << format_double(row.stats.val_loss) << ',' << format_double(row.stats.val_ccc_v)
                << ',' << format_double(row.stats.val_ccc_a) << "\n";
    }
    out << "best_epoch," << log.best_epoch << "\n";
}

namespace {

// Full batches in shuffled order; a trailing single sample is folded into the
// previous batch so train-mode batchnorm always sees >= 2 samples.
std::vector<std::pair<size_t, size_t>> batch_ranges(size_t n, int batch_size) {
    std::vector<std::pair<size_t, size_t>> out;
    size_t pos = 0;
    while (pos < n) {
        size_t end = std::min(n, pos + static_cast<size_t>(batch_size));
        if (n - end == 1) end = n;
        out.emplace_back(pos, end);
        pos = end;
    }
    return out;
}

TensorT<float> gather_images(const ImageDataset& ds, const std::vector<size_t>& order, size_t lo,
                             size_t hi) {
    const int hw = ds.hw;
    TensorT<float> batch({static_cast<int>(hi - lo), 1, hw, hw});
    for (size_t i = lo; i < hi; ++i) {
        const auto& px = ds.samples[order[i]].pixels;
        std::copy(px.begin(), px.end(), batch.data() + (i - lo) * px.size());
    }
    return batch;
}

struct RegressionEval {
    TensorT<float> preds, targets;
};

RegressionEval predict_dataset(const nn::CnnModel<float>& model, const ImageDataset& ds,
                               int batch_size) {
    const int n = static_cast<int>(ds.samples.size());
    RegressionEval ev{TensorT<float>({n, 2}), TensorT<float>({n, 2})};
    std::vector<size_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(order.size(), pos + static_cast<size_t>(batch_size));
        TensorT<float> batch = gather_images(ds, order, pos, end);
        TensorT<float> out = model.forward(batch, false, 0, nullptr);
        for (size_t i = pos; i < end; ++i) {
            ev.preds.at(static_cast<int>(i), 0) = out.at(static_cast<int>(i - pos), 0);
            ev.preds.at(static_cast<int>(i), 1) = out.at(static_cast<int>(i - pos), 1);
            ev.targets.at(static_cast<int>(i), 0) = ds.samples[i].target[0];
            ev.targets.at(static_cast<int>(i), 1) = ds.samples[i].target[1];
        }
    }
    return ev;
}

std::vector<double> column(const TensorT<float>& t, int col) {
    std::vector<double> out(static_cast<size_t>(t.dim(0)));
    for (int i = 0; i < t.dim(0); ++i) out[static_cast<size_t>(i)] = t.at(i, col);
    return out;
}

}  // namespace

TrainLog train_cnn(nn::CnnModel<float>& model, const ImageDataset& train, const ImageDataset& val,
                   const TrainConfig& cfg, bool augment) {
    cfg.validate();
    if (train.samples.empty()) throw DataError("train_cnn: empty training set");
    if (val.samples.empty()) throw DataError("train_cnn: empty validation set");
    const bool classification = model.spec().head == nn::HeadKind::Classification;
    if (classification && cfg.loss != LossKind::CrossEntropy)
        throw ConfigError("train_cnn: classification head requires cross_entropy loss");
    if (!classification && cfg.loss == LossKind::CrossEntropy)
        throw ConfigError("train_cnn: regression head cannot use cross_entropy loss");

    nn::ParamSet<float> grads = model.params().zeros_like();
    nn::ParamSet<float> velocity = model.params().zeros_like();
    std::vector<size_t> order(train.samples.size());
    std::iota(order.begin(), order.end(), 0);
    int epoch_counter = 0;

    TrainHooks hooks;
    hooks.run_train_epoch = [&](Rng& rng) {
        ++epoch_counter;
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        size_t sample_count = 0;
        const auto ranges = batch_ranges(order.size(), cfg.batch_size);
        for (size_t bi = 0; bi < ranges.size(); ++bi) {
            const auto [lo, hi] = ranges[bi];
            TensorT<float> batch = gather_images(train, order, lo, hi);
            if (augment) {
                const int hw = train.hw;
                Image img;
                img.width = hw;
                img.height = hw;
                img.channels = 1;
                for (size_t i = lo; i < hi; ++i) {
                    img.pixels.assign(batch.data() + (i - lo) * static_cast<size_t>(hw) * hw,
                                      batch.data() + (i - lo + 1) * static_cast<size_t>(hw) * hw);
                    const uint64_t seed = derive_seed(cfg.seed, static_cast<uint64_t>(epoch_counter),
                                                      train.samples[order[i]].augment_salt);
                    Image warped = augment_image(img, seed);
                    std::copy(warped.pixels.begin(), warped.pixels.end(),
                              batch.data() + (i - lo) * static_cast<size_t>(hw) * hw);
                }
            }
            const uint64_t drop_seed = derive_seed(cfg.seed, static_cast<uint64_t>(epoch_counter),
                                                   0x0d0bull + bi);
            nn::CnnCache<float> cache;
            TensorT<float> out = model.forward(batch, true, drop_seed, &cache);

            double batch_loss;
            TensorT<float> grad_head;
            if (classification) {
                std::vector<int> labels;
                labels.reserve(hi - lo);
                for (size_t i = lo; i < hi; ++i) labels.push_back(train.samples[order[i]].label);
                batch_loss = cross_entropy(out, labels);
                grad_head = softmax_ce_grad(out, labels);
            } else {
                TensorT<float> targets({static_cast<int>(hi - lo), 2});
                for (size_t i = lo; i < hi; ++i) {
                    targets.at(static_cast<int>(i - lo), 0) = train.samples[order[i]].target[0];
                    targets.at(static_cast<int>(i - lo), 1) = train.samples[order[i]].target[1];
                }
                if (cfg.loss == LossKind::Ccc) {
                    batch_loss = ccc_loss(out, targets);
                    grad_head = ccc_loss_grad(out, targets);
                } else {
                    batch_loss = mse(out, targets);
                    grad_head = mse_grad(out, targets);
                }
            }
            for (auto& e : grads.entries) e.tensor.fill(0.f);
            model.backward(grad_head, cache, grads);
            sgd_step(model.params(), grads, velocity, cfg);
            loss_sum += batch_loss * static_cast<double>(hi - lo);
            sample_count += hi - lo;
        }
        return loss_sum / static_cast<double>(sample_count);
    };

    hooks.evaluate = [&]() {
        EpochStats stats;
        if (classification) {
            std::vector<int> preds, truths;
            double loss_sum = 0;
            size_t n = 0;
            const auto ranges = batch_ranges(val.samples.size(), cfg.batch_size);
            std::vector<size_t> vorder(val.samples.size());
            std::iota(vorder.begin(), vorder.end(), 0);
            for (const auto& [lo, hi] : ranges) {
                TensorT<float> batch = gather_images(val, vorder, lo, hi);
                TensorT<float> probs = model.forward(batch, false, 0, nullptr);
                std::vector<int> labels;
                for (size_t i = lo; i < hi; ++i) labels.push_back(val.samples[i].label);
                loss_sum += cross_entropy(probs, labels) * static_cast<double>(hi - lo);
                n += hi - lo;
                for (int row = 0; row < probs.dim(0); ++row) {
                    int best = 0;
                    for (int k = 1; k < probs.dim(1); ++k)
                        if (probs.at(row, k) > probs.at(row, best)) best = k;
                    preds.push_back(best);
                    truths.push_back(labels[static_cast<size_t>(row)]);
                }
            }
            stats.val_loss = loss_sum / static_cast<double>(n);
            stats.val_accuracy = confusion_and_accuracy(preds, truths, model.spec().classes).second;
        } else {
            RegressionEval ev = predict_dataset(model, val, cfg.batch_size);
            stats.val_loss = cfg.loss == LossKind::Ccc ? ccc_loss(ev.preds, ev.targets)
                                                       : mse(ev.preds, ev.targets);
            stats.val_ccc_v = ccc(std::span<const double>(column(ev.preds, 0)),
                                  std::span<const double>(column(ev.targets, 0)));
            stats.val_ccc_a = ccc(std::span<const double>(column(ev.preds, 1)),
                                  std::span<const double>(column(ev.targets, 1)));
        }
        return stats;
    };

    hooks.snapshot = [&]() { return model.params().flatten(); };
    hooks.restore = [&](const std::vector<float>& flat) { model.params().unflatten(flat); };

    return train_loop(cfg, hooks);
}

namespace {

TensorT<float> rnn_window_tensor(const RnnDataset& ds, const WindowRef& ref) {
    TensorT<float> w({ds.window, ds.dim});
    for (int t = 0; t < ds.window; ++t)
        std::copy(ds.step(ref, t), ds.step(ref, t) + ds.dim, w.data() + static_cast<size_t>(t) * ds.dim);
    return w;
}

}  // namespace

TrainLog train_rnn(nn::RnnModel<float>& model, const RnnDataset& train, const RnnDataset& val,
                   const TrainConfig& cfg) {
    cfg.validate();
    if (train.refs.empty()) throw DataError("train_rnn: empty training set");
    if (val.refs.empty()) throw DataError("train_rnn: empty validation set");
    if (cfg.loss == LossKind::CrossEntropy) throw ConfigError("train_rnn: needs a regression loss");

    nn::ParamSet<float> grads = model.params().zeros_like();
    nn::ParamSet<float> velocity = model.params().zeros_like();
    std::vector<size_t> order(train.refs.size());
    std::iota(order.begin(), order.end(), 0);

    auto predict_all = [&](const RnnDataset& ds) {
        TensorT<float> preds({static_cast<int>(ds.refs.size()), 2});
        TensorT<float> targets({static_cast<int>(ds.refs.size()), 2});
        for (size_t i = 0; i < ds.refs.size(); ++i) {
            TensorT<float> out = model.forward(rnn_window_tensor(ds, ds.refs[i]), nullptr);
            preds.at(static_cast<int>(i), 0) = out[0];
            preds.at(static_cast<int>(i), 1) = out[1];
            targets.at(static_cast<int>(i), 0) = ds.refs[i].target[0];
            targets.at(static_cast<int>(i), 1) = ds.refs[i].target[1];
        }
        return std::make_pair(std::move(preds), std::move(targets));
    };

    TrainHooks hooks;
    hooks.run_train_epoch = [&](Rng& rng) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        size_t sample_count = 0;
        const auto ranges = batch_ranges(order.size(), cfg.batch_size);
        std::vector<nn::RnnCache<float>> caches;
        for (const auto& [lo, hi] : ranges) {
            const int bsz = static_cast<int>(hi - lo);
            caches.assign(static_cast<size_t>(bsz), {});
            TensorT<float> preds({bsz, 2}), targets({bsz, 2});
            for (int i = 0; i < bsz; ++i) {
                const WindowRef& ref = train.refs[order[lo + static_cast<size_t>(i)]];
                TensorT<float> out =
                    model.forward(rnn_window_tensor(train, ref), &caches[static_cast<size_t>(i)]);
                preds.at(i, 0) = out[0];
                preds.at(i, 1) = out[1];
                targets.at(i, 0) = ref.target[0];
                targets.at(i, 1) = ref.target[1];
            }
            double batch_loss;
            TensorT<float> grad_pred;
            if (cfg.loss == LossKind::Ccc) {
                batch_loss = ccc_loss(preds, targets);
                grad_pred = ccc_loss_grad(preds, targets);
            } else {
                batch_loss = mse(preds, targets);
                grad_pred = mse_grad(preds, targets);
            }
            for (auto& e : grads.entries) e.tensor.fill(0.f);
            for (int i = 0; i < bsz; ++i) {
                TensorT<float> gy({2});
                gy[0] = grad_pred.at(i, 0);
                gy[1] = grad_pred.at(i, 1);
                model.backward(gy, caches[static_cast<size_t>(i)], grads);
            }
            sgd_step(model.params(), grads, velocity, cfg);
            loss_sum += batch_loss * bsz;
            sample_count += static_cast<size_t>(bsz);
        }
        return loss_sum / static_cast<double>(sample_count);
    };

    hooks.evaluate = [&]() {
        EpochStats stats;
        auto [preds, targets] = predict_all(val);
        stats.val_loss =
            cfg.loss == LossKind::Ccc ? ccc_loss(preds, targets) : mse(preds, targets);
        std::vector<double> pv(static_cast<size_t>(preds.dim(0))), tv(pv.size()), pa(pv.size()), ta(pv.size());
        for (int i = 0; i < preds.dim(0); ++i) {
            pv[static_cast<size_t>(i)] = preds.at(i, 0);
            tv[static_cast<size_t>(i)] = targets.at(i, 0);
            pa[static_cast<size_t>(i)] = preds.at(i, 1);
            ta[static_cast<size_t>(i)] = targets.at(i, 1);
        }
        stats.val_ccc_v = ccc(std::span<const double>(pv), std::span<const double>(tv));
        stats.val_ccc_a = ccc(std::span<const double>(pa), std::span<const double>(ta));
        return stats;
    };

    hooks.snapshot = [&]() { return model.params().flatten(); };
    hooks.restore = [&](const std::vector<float>& flat) { model.params().unflatten(flat); };

    return train_loop(cfg, hooks);
}

std::vector<std::vector<float>> extract_features(const nn::CnnModel<float>& model,
                                                 const std::vector<const float*>& frames, int hw,
                                                 int batch_size) {
    std::vector<std::vector<float>> out;
    out.reserve(frames.size());
    const size_t px = static_cast<size_t>(hw) * hw;
    for (size_t pos = 0; pos < frames.size(); pos += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(frames.size(), pos + static_cast<size_t>(batch_size));
        TensorT<float> batch({static_cast<int>(end - pos), 1, hw, hw});
        for (size_t i = pos; i < end; ++i)
            std::copy(frames[i], frames[i] + px, batch.data() + (i - pos) * px);
        nn::CnnCache<float> cache;
        model.forward(batch, false, 0, &cache);
        for (int row = 0; row < cache.features.dim(0); ++row) {
            std::vector<float> f(static_cast<size_t>(cache.features.dim(1)));
            std::copy(cache.features.data() + cache.features.offset(row, 0),
                      cache.features.data() + cache.features.offset(row, 0) + f.size(), f.begin());
            out.push_back(std::move(f));
        }
    }
    return out;
}

}  // namespace va
