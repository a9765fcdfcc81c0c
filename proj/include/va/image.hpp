#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "va/rng.hpp"

namespace va {

// Row-major pixel buffer in [0,1]; channels interleaved for RGB.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;  // 1 or 3
    std::vector<float> pixels;

    float at(int y, int x, int c = 0) const {
        return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    float& at(int y, int x, int c = 0) {
        return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

// Binary PGM (P5) / PPM (P6), maxval 255.
Image read_pnm(const std::string& path);
void write_pgm(const std::string& path, const Image& img);

// Luma 0.299/0.587/0.114; single-channel input passes through.
Image to_grayscale(const Image& img);

// Half-pixel-center bilinear resample; identity when sizes match.
Image resize_bilinear(const Image& img, int out_w, int out_h);

// Grayscale + resize to hw x hw, values in [0,1].
Image preprocess_image(const Image& img, int hw = 96);

struct AugmentParams {
    double scale = 1.0;       // [0.9, 1.1]
    double shift_x = 0.0;     // pixels, up to +-10% of width
    double shift_y = 0.0;
    double shear_deg = 0.0;   // [-10, 10]
    double rotate_deg = 0.0;  // [-15, 15]
    bool flip = false;        // horizontal
    double brightness = 0.0;  // [-0.1, 0.1], result clamped to [0,1]

    static AugmentParams sample(Rng& rng, int width, int height);
};

// Applies scale, shift, shear, rotation, flip, brightness in that order about
// the image centre; bilinear resampling with zero fill outside.
Image augment_image(const Image& img, const AugmentParams& params);
Image augment_image(const Image& img, uint64_t seed);

}  // namespace va
