#include "va/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "va/errors.hpp"

namespace va {

namespace {

constexpr double kPi = 3.14159265358979323846;

int read_pnm_token(std::istream& in, const std::string& path) {
    // skips whitespace and '#' comments
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = -1;
    in >> value;
    if (!in || value < 0) throw DataError("malformed PNM header in " + path);
    return value;
}

struct Affine {
    // x' = a*x + b*y + c ; y' = d*x + e*y + f
    double a = 1, b = 0, c = 0, d = 0, e = 1, f = 0;

    static Affine identity() { return {}; }

    Affine then(const Affine& o) const {  // apply *this first, then o
        return {o.a * a + o.b * d, o.a * b + o.b * e, o.a * c + o.b * f + o.c,
                o.d * a + o.e * d, o.d * b + o.e * e, o.d * c + o.e * f + o.f};
    }

    Affine inverse() const {
        const double det = a * e - b * d;
        if (std::abs(det) < 1e-12) throw DataError("augment: singular transform");
        const double ia = e / det, ib = -b / det, id = -d / det, ie = a / det;
        return {ia, ib, -(ia * c + ib * f), id, ie, -(id * c + ie * f)};
    }
};

float sample_bilinear_zero(const Image& img, double sx, double sy, int ch) {
    const double fx = std::floor(sx), fy = std::floor(sy);
    const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
    const double dx = sx - fx, dy = sy - fy;
    auto pix = [&](int x, int y) -> double {
        if (x < 0 || x >= img.width || y < 0 || y >= img.height) return 0.0;
        return img.at(y, x, ch);
    };
    const double top = (1.0 - dx) * pix(x0, y0) + dx * pix(x0 + 1, y0);
    const double bot = (1.0 - dx) * pix(x0, y0 + 1) + dx * pix(x0 + 1, y0 + 1);
    return static_cast<float>((1.0 - dy) * top + dy * bot);
}

}  // namespace

Image read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image: " + path);
    char m0 = 0, m1 = 0;
    in.get(m0).get(m1);
    if (m0 != 'P' || (m1 != '5' && m1 != '6'))
        throw DataError("unsupported image format (want binary PGM/PPM): " + path);
    const int channels = m1 == '5' ? 1 : 3;
    const int width = read_pnm_token(in, path);
    const int height = read_pnm_token(in, path);
    const int maxval = read_pnm_token(in, path);
    if (width < 1 || height < 1) throw DataError("bad image dimensions in " + path);
    if (maxval <= 0 || maxval > 255) throw DataError("unsupported PNM maxval in " + path);
    in.get();  // single whitespace after maxval

    Image img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    const size_t n = static_cast<size_t>(width) * height * channels;
    std::vector<unsigned char> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) throw DataError("truncated image data in " + path);
    img.pixels.resize(n);
    const float inv = 1.0f / static_cast<float>(maxval);
    for (size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<float>(raw[i]) * inv;
    return img;
}

void write_pgm(const std::string& path, const Image& img) {
    if (img.channels != 1) throw DataError("write_pgm: expected grayscale image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        const long v = std::lround(static_cast<double>(img.pixels[i]) * 255.0);
        raw[i] = static_cast<unsigned char>(std::clamp(v, 0l, 255l));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw DataError("failed writing image: " + path);
}

Image to_grayscale(const Image& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3) throw DataError("to_grayscale: expected 1 or 3 channels");
    Image out;
    out.width = img.width;
    out.height = img.height;
    out.channels = 1;
    out.pixels.resize(static_cast<size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(y, x) = 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) +
                           0.114f * img.at(y, x, 2);
    return out;
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw DataError("resize: bad target size");
    if (out_w == img.width && out_h == img.height) return img;
    Image out;
    out.width = out_w;
    out.height = out_h;
    out.channels = img.channels;
    out.pixels.resize(static_cast<size_t>(out_w) * out_h * img.channels);
    const double sx_scale = static_cast<double>(img.width) / out_w;
    const double sy_scale = static_cast<double>(img.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double sy = (y + 0.5) * sy_scale - 0.5;
        for (int x = 0; x < out_w; ++x) {
            const double sx = (x + 0.5) * sx_scale - 0.5;
            // clamp to edges for interpolation
            const double cx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
            const double cy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
            const int x0 = std::min(static_cast<int>(cx), img.width - 2 >= 0 ? img.width - 2 : 0);
            const int y0 = std::min(static_cast<int>(cy), img.height - 2 >= 0 ? img.height - 2 : 0);
            const double dx = cx - x0, dy = cy - y0;
            for (int c = 0; c < img.channels; ++c) {
                const double p00 = img.at(y0, x0, c);
                const double p10 = img.at(y0, std::min(x0 + 1, img.width - 1), c);
                const double p01 = img.at(std::min(y0 + 1, img.height - 1), x0, c);
                const double p11 =
                    img.at(std::min(y0 + 1, img.height - 1), std::min(x0 + 1, img.width - 1), c);
                const double top = (1 - dx) * p00 + dx * p10;
                const double bot = (1 - dx) * p01 + dx * p11;
                out.at(y, x, c) = static_cast<float>((1 - dy) * top + dy * bot);
            }
        }
    }
    return out;
}

Image preprocess_image(const Image& img, int hw) {
    if (img.width < 1 || img.height < 1) throw DataError("preprocess: empty image");
    return resize_bilinear(to_grayscale(img), hw, hw);
}

AugmentParams AugmentParams::sample(Rng& rng, int width, int height) {
    AugmentParams p;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    p.scale = 0.9 + 0.2 * u01(rng);
    p.shift_x = (2.0 * u01(rng) - 1.0) * 0.1 * width;
    p.shift_y = (2.0 * u01(rng) - 1.0) * 0.1 * height;
    p.shear_deg = (2.0 * u01(rng) - 1.0) * 10.0;
    p.rotate_deg = (2.0 * u01(rng) - 1.0) * 15.0;
    p.flip = u01(rng) < 0.5;
    p.brightness = (2.0 * u01(rng) - 1.0) * 0.1;
    return p;
}

Image augment_image(const Image& img, const AugmentParams& params) {
    if (img.channels != 1) throw DataError("augment: expected grayscale image");
    if (img.width < 1 || img.height < 1) throw DataError("augment: empty image");

    const double cx = (img.width - 1) / 2.0;
    const double cy = (img.height - 1) / 2.0;
    const Affine to_center{1, 0, -cx, 0, 1, -cy};
    const Affine from_center{1, 0, cx, 0, 1, cy};
    const Affine scale{params.scale, 0, 0, 0, params.scale, 0};
    const Affine shift{1, 0, params.shift_x, 0, 1, params.shift_y};
    const double sh = std::tan(params.shear_deg * kPi / 180.0);
    const Affine shear{1, sh, 0, 0, 1, 0};
    const double th = params.rotate_deg * kPi / 180.0;
    const Affine rot{std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th), 0};
    const Affine flip{params.flip ? -1.0 : 1.0, 0, 0, 0, 1, 0};

    // forward map, applied in fixed order about the centre
    const Affine fwd =
        to_center.then(scale).then(shift).then(shear).then(rot).then(flip).then(from_center);
    const Affine inv = fwd.inverse();

    Image out;
    out.width = img.width;
    out.height = img.height;
    out.channels = 1;
    out.pixels.resize(img.pixels.size());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double sx = inv.a * x + inv.b * y + inv.c;
            const double sy = inv.d * x + inv.e * y + inv.f;
            double v = sample_bilinear_zero(img, sx, sy, 0) + params.brightness;
            out.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    return out;
}

Image augment_image(const Image& img, uint64_t seed) {
    Rng rng = make_rng(seed);
    return augment_image(img, AugmentParams::sample(rng, img.width, img.height));
}

}  // namespace va
