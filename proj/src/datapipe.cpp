#include "va/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "va/config.hpp"
#include "va/rng.hpp"

namespace va {

namespace {

constexpr const char* kAnnotationHeader = "video_id,frame_idx,valence,arousal,face_detected,image_path";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

[[noreturn]] void row_error(const std::string& path, int line, const std::string& what) {
    throw DataError(path + ":" + std::to_string(line) + ": " + what);
}

float parse_label(const std::string& s, const std::string& path, int line, const char* name) {
    try {
        size_t pos = 0;
        const float v = std::stof(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        if (v < -1.0f || v > 1.0f)
            row_error(path, line, std::string(name) + " outside [-1,1]: " + s);
        return v;
    } catch (const DataError&) {
        throw;
    } catch (const std::exception&) {
        row_error(path, line, std::string("bad ") + name + " value: '" + s + "'");
    }
}

}  // namespace

std::vector<FrameRecord> load_annotations(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open annotations: " + path);
    std::string line;
    int line_no = 0;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kAnnotationHeader)
        throw DataError(path + ":1: expected header '" + kAnnotationHeader + "'");

    std::vector<FrameRecord> records;
    std::set<std::pair<std::string, int64_t>> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cols = split_csv(line);
        if (cols.size() != 6)
            row_error(path, line_no, "expected 6 columns, got " + std::to_string(cols.size()));
        FrameRecord r;
        r.video_id = cols[0];
        if (r.video_id.empty()) row_error(path, line_no, "empty video_id");
        try {
            size_t pos = 0;
            r.frame_idx = std::stoll(cols[1], &pos);
            if (pos != cols[1].size() || r.frame_idx < 0) throw std::invalid_argument(cols[1]);
        } catch (const std::exception&) {
            row_error(path, line_no, "bad frame_idx: '" + cols[1] + "'");
        }
        const bool has_v = !cols[2].empty(), has_a = !cols[3].empty();
        if (has_v != has_a)
            row_error(path, line_no, "valence and arousal must be present together or absent together");
        if (has_v) {
            r.valence = parse_label(cols[2], path, line_no, "valence");
            r.arousal = parse_label(cols[3], path, line_no, "arousal");
        }
        if (cols[4] == "0")
            r.face_detected = false;
        else if (cols[4] == "1")
            r.face_detected = true;
        else
            row_error(path, line_no, "face_detected must be 0 or 1, got '" + cols[4] + "'");
        r.image_path = cols[5];
        if (!seen.insert({r.video_id, r.frame_idx}).second)
            row_error(path, line_no, "duplicate (video_id, frame_idx): " + r.video_id + "," +
                                         std::to_string(r.frame_idx));
        records.push_back(std::move(r));
    }
    std::stable_sort(records.begin(), records.end(), [](const FrameRecord& a, const FrameRecord& b) {
        return a.video_id != b.video_id ? a.video_id < b.video_id : a.frame_idx < b.frame_idx;
    });
    return records;
}

void save_annotations(const std::string& path, const std::vector<FrameRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write annotations: " + path);
    out << kAnnotationHeader << "\n";
    for (const auto& r : records) {
        out << r.video_id << ',' << r.frame_idx << ',';
        if (r.labeled()) out << format_float(*r.valence) << ',' << format_float(*r.arousal);
        else out << ',';
        out << ',' << (r.face_detected ? '1' : '0') << ',' << r.image_path << "\n";
    }
}

std::vector<FrameRecord> filter_zero_va(const std::vector<FrameRecord>& records) {
    std::vector<FrameRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        if (r.labeled() && *r.valence == 0.0f && *r.arousal == 0.0f) continue;
        out.push_back(r);
    }
    return out;
}

int BinHistogram::bin_of(double v) {
    if (v < -1.0 || v > 1.0)
        throw DataError("label outside [-1,1]: " + std::to_string(v));
    const int b = static_cast<int>(std::floor((v + 1.0) / 0.05));
    return std::min(b, kBins - 1);
}

int64_t BinHistogram::total() const {
    int64_t t = 0;
    for (int64_t c : counts) t += c;
    return t;
}

int64_t BinHistogram::max_count() const {
    int64_t m = 0;
    for (int64_t c : counts) m = std::max(m, c);
    return m;
}

double BinHistogram::mean_nonempty() const {
    int64_t sum = 0, nonempty = 0;
    for (int64_t c : counts) {
        sum += c;
        if (c > 0) ++nonempty;
    }
    if (nonempty == 0) return 0.0;
    return static_cast<double>(sum) / static_cast<double>(nonempty);
}

std::string BinHistogram::to_text() const {
    std::ostringstream os;
    for (int a = 0; a < kBins; ++a) {
        for (int v = 0; v < kBins; ++v) {
            if (v) os << ' ';
            os << at(a, v);
        }
        os << '\n';
    }
    return os.str();
}

BinHistogram build_histogram(const std::vector<FrameRecord>& records) {
    BinHistogram hist;
    for (const auto& r : records) {
        if (!r.labeled())
            throw DataError("build_histogram: unlabeled record " + r.video_id + "," +
                            std::to_string(r.frame_idx));
        ++hist.at(BinHistogram::bin_of(*r.arousal), BinHistogram::bin_of(*r.valence));
    }
    return hist;
}

DownsampleTarget downsample_target_from_string(const std::string& s) {
    if (s == "max-bin") return DownsampleTarget::MaxBin;
    if (s == "mean-bin") return DownsampleTarget::MeanBin;
    if (s == "midpoint") return DownsampleTarget::Midpoint;
    throw ConfigError("unknown downsample target '" + s + "' (expected max-bin, mean-bin or midpoint)");
}

std::string downsample_target_to_string(DownsampleTarget t) {
    switch (t) {
        case DownsampleTarget::MaxBin: return "max-bin";
        case DownsampleTarget::MeanBin: return "mean-bin";
        case DownsampleTarget::Midpoint: return "midpoint";
    }
    return "midpoint";
}

DownsampleMode downsample_mode_from_string(const std::string& s) {
    if (s == "balance") return DownsampleMode::Balance;
    if (s == "literal") return DownsampleMode::Literal;
    throw ConfigError("unknown downsample mode '" + s + "' (expected balance or literal)");
}

std::string downsample_mode_to_string(DownsampleMode m) {
    return m == DownsampleMode::Balance ? "balance" : "literal";
}

std::vector<FrameRecord> downsample(const std::vector<FrameRecord>& records,
                                    const BinHistogram& histogram, const DownsamplePolicy& policy) {
    if (histogram.total() == 0) throw DataError("downsample: empty histogram");
    double k_target = 0;
    switch (policy.target) {
        case DownsampleTarget::MaxBin: k_target = static_cast<double>(histogram.max_count()); break;
        case DownsampleTarget::MeanBin: k_target = histogram.mean_nonempty(); break;
        case DownsampleTarget::Midpoint:
            k_target = 0.5 * (static_cast<double>(histogram.max_count()) + histogram.mean_nonempty());
            break;
    }
    if (k_target <= 0) throw DataError("downsample: target bin count is zero");

    Rng rng = make_rng(policy.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<FrameRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        if (!r.labeled())
            throw DataError("downsample: unlabeled record " + r.video_id + "," +
                            std::to_string(r.frame_idx));
        const double k_current = static_cast<double>(
            histogram.at(BinHistogram::bin_of(*r.arousal), BinHistogram::bin_of(*r.valence)));
        if (k_current <= 0)
            throw DataError("downsample: histogram does not cover record " + r.video_id + "," +
                            std::to_string(r.frame_idx));
        const double ratio = policy.mode == DownsampleMode::Balance ? k_target / k_current
                                                                    : k_current / k_target;
        const double p = std::min(1.0, ratio);
        if (u01(rng) < p) out.push_back(r);
    }
    return out;
}

std::vector<WindowSpec> build_windows(const std::vector<VideoSeries>& videos, int w) {
    if (w < 1) throw DataError("build_windows: window length must be >= 1");
    std::vector<WindowSpec> out;
    for (size_t vi = 0; vi < videos.size(); ++vi) {
        const VideoSeries& video = videos[vi];
        const size_t n = video.frame_idx.size();
        if (video.valid.size() != n || video.labeled.size() != n || video.labels.size() != n)
            throw DataError("build_windows: inconsistent series arrays for " + video.video_id);
        if (n < static_cast<size_t>(w) + 1) continue;
        // usable[i]: frame can participate in a window (input or target)
        auto usable = [&](size_t i) { return video.valid[i] && video.labeled[i]; };
        // window input positions p..p+w-1, target at p+w
        for (size_t p = 0; p + static_cast<size_t>(w) < n; ++p) {
            bool ok = true;
            for (size_t q = p; q <= p + static_cast<size_t>(w); ++q) {
                if (!usable(q) ||
                    (q > p && video.frame_idx[q] != video.frame_idx[q - 1] + 1)) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            WindowSpec spec;
            spec.video = static_cast<int>(vi);
            spec.start = static_cast<int>(p);
            spec.end_frame_idx = video.frame_idx[p + static_cast<size_t>(w) - 1];
            spec.target_valence = video.labels[p + static_cast<size_t>(w)][0];
            spec.target_arousal = video.labels[p + static_cast<size_t>(w)][1];
            out.push_back(spec);
        }
    }
    return out;
}

std::vector<float> interpolate_series(const std::vector<int64_t>& frame_idx,
                                      const std::vector<std::optional<float>>& values) {
    if (frame_idx.size() != values.size())
        throw DataError("interpolate: index/value length mismatch");
    const size_t n = values.size();
    std::vector<size_t> known;
    for (size_t i = 0; i < n; ++i)
        if (values[i].has_value()) known.push_back(i);
    if (known.empty()) throw DataError("interpolate: no predictions in series");

    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) {
        if (values[i].has_value()) {
            out[i] = *values[i];
            continue;
        }
        // nearest known neighbours on each side
        auto it = std::lower_bound(known.begin(), known.end(), i);
        if (it == known.begin()) {
            out[i] = *values[known.front()];
        } else if (it == known.end()) {
            out[i] = *values[known.back()];
        } else {
            const size_t hi = *it, lo = *(it - 1);
            const double span = static_cast<double>(frame_idx[hi] - frame_idx[lo]);
            const double t = static_cast<double>(frame_idx[i] - frame_idx[lo]) / span;
            out[i] = static_cast<float>((1.0 - t) * *values[lo] + t * *values[hi]);
        }
    }
    return out;
}

namespace {

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw DataError("truncated feature file: " + path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_features(const std::string& path, const FeatureFile& file) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write feature file: " + path);
    out.write("VAF1", 4);
    write_u32(out, static_cast<uint32_t>(file.records.size()));
    write_u32(out, file.dim);
    for (const auto& rec : file.records) {
        if (rec.values.size() != file.dim)
            throw DataError("feature record dim " + std::to_string(rec.values.size()) +
                            " != file dim " + std::to_string(file.dim));
        write_u32(out, static_cast<uint32_t>(rec.video_id.size()));
        out.write(rec.video_id.data(), static_cast<std::streamsize>(rec.video_id.size()));
        write_u32(out, rec.frame_idx);
        static_assert(sizeof(float) == 4);
        out.write(reinterpret_cast<const char*>(rec.values.data()),
                  static_cast<std::streamsize>(rec.values.size() * 4));
    }
    if (!out) throw DataError("failed writing feature file: " + path);
}

FeatureFile read_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open feature file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "VAF1", 4) != 0)
        throw DataError("not a feature file (bad magic): " + path);
    FeatureFile file;
    const uint32_t count = read_u32(in, path);
    file.dim = read_u32(in, path);
    file.records.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        FeatureRecord rec;
        const uint32_t id_len = read_u32(in, path);
        rec.video_id.resize(id_len);
        in.read(rec.video_id.data(), id_len);
        rec.frame_idx = read_u32(in, path);
        rec.values.resize(file.dim);
        in.read(reinterpret_cast<char*>(rec.values.data()),
                static_cast<std::streamsize>(file.dim) * 4);
        if (!in) throw DataError("truncated feature file: " + path);
        file.records.push_back(std::move(rec));
    }
    return file;
}

}  // namespace va
