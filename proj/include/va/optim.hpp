#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "va/cnn.hpp"
#include "va/objectives.hpp"
#include "va/rnn.hpp"
#include "va/tensor.hpp"

namespace va {

enum class LossKind { Ccc, Mse, CrossEntropy };

LossKind loss_kind_from_string(const std::string& s);
std::string loss_kind_to_string(LossKind k);

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    int max_epochs = 100;
    int batch_size = 64;  // 128 for the recurrent recipe
    int patience = 10;    // epochs without validation improvement
    uint64_t seed = 1;
    LossKind loss = LossKind::Ccc;

    void validate() const;
};

// v <- momentum*v + (g + weight_decay*w); w <- w - lr*v. Entries flagged
// decay=false (batchnorm, biases) skip the L2 term; non-trainable entries are
// left alone.
template <typename T>
void sgd_step(nn::ParamSet<T>& params, const nn::ParamSet<T>& grads, nn::ParamSet<T>& velocity,
              const TrainConfig& cfg);

struct EpochStats {
    double train_loss = 0;
    double val_loss = 0;
    double val_ccc_v = std::nan("");
    double val_ccc_a = std::nan("");
    double val_accuracy = std::nan("");
};

struct TrainLog {
    struct Row {
        int epoch = 0;  // 1-based
        EpochStats stats;
    };
    std::vector<Row> rows;
    int best_epoch = 0;
};

// Callbacks let one early-stopping epoch loop drive every model family.
struct TrainHooks {
    std::function<double(Rng&)> run_train_epoch;          // returns mean train loss
    std::function<EpochStats()> evaluate;                 // fills val_* fields
    std::function<std::vector<float>()> snapshot;         // copy current params
    std::function<void(const std::vector<float>&)> restore;
};

// Runs up to max_epochs, keeps the parameters of the best validation epoch,
// stops after `patience` epochs without improvement. Non-finite losses abort.
TrainLog train_loop(const TrainConfig& cfg, const TrainHooks& hooks);

void save_train_log(const std::string& path, const TrainLog& log, bool classification);

// ---- concrete datasets + trainers ----

struct ImageSample {
    std::vector<float> pixels;  // hw*hw grayscale in [0,1]
    std::array<float, 2> target{0, 0};  // valence, arousal
    int label = -1;                     // classification
    uint64_t augment_salt = 0;          // stable per-frame seed component
};

struct ImageDataset {
    int hw = 96;
    std::vector<ImageSample> samples;
};

// Trains in place; augment=true resamples each training image per epoch with
// a seed derived from (cfg.seed, epoch, sample salt).
TrainLog train_cnn(nn::CnnModel<float>& model, const ImageDataset& train, const ImageDataset& val,
                   const TrainConfig& cfg, bool augment);

struct WindowRef {
    int video = 0;
    int start = 0;  // position of the first feature row
    std::array<float, 2> target{0, 0};
    int64_t end_frame_idx = 0;
    std::string video_id;
};

struct RnnDataset {
    int window = 100;
    int dim = 300;
    // per-video flat feature rows, [n_frames * dim]
    std::shared_ptr<const std::vector<std::vector<float>>> video_feats;
    std::vector<WindowRef> refs;

    const float* step(const WindowRef& r, int t) const {
        return (*video_feats)[static_cast<size_t>(r.video)].data() +
               static_cast<size_t>(r.start + t) * dim;
    }
};

TrainLog train_rnn(nn::RnnModel<float>& model, const RnnDataset& train, const RnnDataset& val,
                   const TrainConfig& cfg);

// Eval-mode forward over frames in order, tapping the post-relu dense
// activation. Returns one feature vector per input image.
std::vector<std::vector<float>> extract_features(const nn::CnnModel<float>& model,
                                                 const std::vector<const float*>& frames, int hw,
                                                 int batch_size = 64);

}  // namespace va
