#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "va/errors.hpp"
#include "va/image.hpp"

namespace va {

// One annotated video frame. Labels are optional but valence/arousal appear
// together or not at all. The image may live on disk or inline (synthetic
// datasets and tests).
struct FrameRecord {
    std::string video_id;
    int64_t frame_idx = 0;
    std::optional<float> valence;
    std::optional<float> arousal;
    bool face_detected = false;
    std::string image_path;
    std::shared_ptr<const Image> inline_image;

    bool labeled() const { return valence.has_value() && arousal.has_value(); }
};

// CSV schema: video_id,frame_idx,valence,arousal,face_detected,image_path.
// Empty valence/arousal fields mean unlabeled. Output is sorted by
// (video_id, frame_idx); malformed rows and duplicates are errors with line
// numbers.
std::vector<FrameRecord> load_annotations(const std::string& path);
void save_annotations(const std::string& path, const std::vector<FrameRecord>& records);

// Drops records whose valence and arousal are both exactly zero.
std::vector<FrameRecord> filter_zero_va(const std::vector<FrameRecord>& records);

// 40x40 counts over [-1,1]^2; valence selects the column, arousal the row.
// The closed upper edge folds into the last bin.
struct BinHistogram {
    static constexpr int kBins = 40;
    std::array<int64_t, kBins * kBins> counts{};

    static int bin_of(double v);
    int64_t& at(int arousal_bin, int valence_bin) { return counts[static_cast<size_t>(arousal_bin) * kBins + valence_bin]; }
    int64_t at(int arousal_bin, int valence_bin) const { return counts[static_cast<size_t>(arousal_bin) * kBins + valence_bin]; }
    int64_t total() const;
    int64_t max_count() const;
    double mean_nonempty() const;
    std::string to_text() const;
};

BinHistogram build_histogram(const std::vector<FrameRecord>& records);

enum class DownsampleTarget { MaxBin, MeanBin, Midpoint };
enum class DownsampleMode { Balance, Literal };

struct DownsamplePolicy {
    DownsampleTarget target = DownsampleTarget::Midpoint;
    DownsampleMode mode = DownsampleMode::Balance;
    uint64_t seed = 1;
};

DownsampleTarget downsample_target_from_string(const std::string& s);
std::string downsample_target_to_string(DownsampleTarget t);
DownsampleMode downsample_mode_from_string(const std::string& s);
std::string downsample_mode_to_string(DownsampleMode m);

// Balance mode keeps each record with p = min(1, k_target/k_current) so dense
// bins shrink toward the target; literal mode keeps the printed ratio
// p = min(1, k_current/k_target). k_target comes from the policy target:
// max bin count, mean count over non-empty bins, or their average.
std::vector<FrameRecord> downsample(const std::vector<FrameRecord>& records,
                                    const BinHistogram& histogram, const DownsamplePolicy& policy);

// Per-video frame sequence used by the window builder. Entries are sorted by
// frame_idx; `valid` marks frames usable as window input (face detected and a
// feature/image available), `labeled` marks frames with targets.
struct VideoSeries {
    std::string video_id;
    std::vector<int64_t> frame_idx;
    std::vector<uint8_t> valid;
    std::vector<uint8_t> labeled;
    std::vector<std::array<float, 2>> labels;
};

// A training window: `w` feature rows starting at `start`, target labels of
// the following frame.
struct WindowSpec {
    int video = 0;
    int start = 0;
    int64_t end_frame_idx = 0;  // frame index of the last input step
    float target_valence = 0;
    float target_arousal = 0;
};

// Stride-1 windows; one is emitted per position where the w input frames plus
// the target frame are consecutive in frame_idx, valid, and labeled.
std::vector<WindowSpec> build_windows(const std::vector<VideoSeries>& videos, int w);

// Linear interpolation across gaps, weighted by frame index distance; leading
// and trailing gaps copy the nearest prediction. Errors if nothing is present.
std::vector<float> interpolate_series(const std::vector<int64_t>& frame_idx,
                                      const std::vector<std::optional<float>>& values);

// ---- feature file (magic VAF1) ----

struct FeatureRecord {
    std::string video_id;
    uint32_t frame_idx = 0;
    std::vector<float> values;
};

struct FeatureFile {
    uint32_t dim = 300;
    std::vector<FeatureRecord> records;
};

void write_features(const std::string& path, const FeatureFile& file);
FeatureFile read_features(const std::string& path);

}  // namespace va
