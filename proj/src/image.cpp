#include "pathvlm/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "pathvlm/rng.hpp"

namespace pathvlm {

void ImageArray::validate() const {
    if (height < 1 || width < 1) throw std::invalid_argument("image: height and width must be >= 1");
    if (data.size() != static_cast<size_t>(height) * width * 3)
        throw std::invalid_argument("image: buffer size does not match H*W*3");
    for (double v : data) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw std::invalid_argument("image: values must be finite and in [0,1]");
    }
}

ImageArray resize_bilinear(const ImageArray& src, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize: output dims must be >= 1");
    if (src.height == out_h && src.width == out_w) return src;
    ImageArray out(out_h, out_w);
    const double sy = out_h > 1 ? static_cast<double>(src.height - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(src.width - 1) / (out_w - 1) : 0.0;
    for (int y = 0; y < out_h; ++y) {
        const double fy = y * sy;
        const int y0 = std::min(static_cast<int>(fy), src.height - 1);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = x * sx;
            const int x0 = std::min(static_cast<int>(fx), src.width - 1);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = src.at(y0, x0, c) * (1.0 - wx) + src.at(y0, x1, c) * wx;
                const double bot = src.at(y1, x0, c) * (1.0 - wx) + src.at(y1, x1, c) * wx;
                out.at(y, x, c) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

ImageArray pad_to_multiple(const ImageArray& src, int multiple) {
    if (multiple < 1) throw std::invalid_argument("pad: multiple must be >= 1");
    const int ph = (src.height + multiple - 1) / multiple * multiple;
    const int pw = (src.width + multiple - 1) / multiple * multiple;
    if (ph == src.height && pw == src.width) return src;
    ImageArray out(ph, pw);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(y, x, c);
    return out;
}

void write_ppm(const ImageArray& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at(y, x, c), 0.0, 1.0);
                row[static_cast<size_t>(x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

ImageArray read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6") throw std::runtime_error("not a P6 ppm: " + path.string());
    int w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    if (w < 1 || h < 1 || maxval != 255) throw std::runtime_error("unsupported ppm header: " + path.string());
    in.get();  // single whitespace after header
    ImageArray img(h, w);
    std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw std::runtime_error("short ppm read: " + path.string());
    for (size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i] / 255.0;
    return img;
}

ImageArray synth_image(int h, int w, uint64_t seed) {
    // low-frequency bands + seeded phase; cheap enough for large test images
    ImageArray img(h, w);
    Rng rng(seed);
    double px = rng.u01() * 6.0 + 0.5;
    double py = rng.u01() * 6.0 + 0.5;
    double ph0 = rng.u01() * 2.0 * M_PI;
    double base[3] = {rng.u01(), rng.u01(), rng.u01()};
    for (int y = 0; y < h; ++y) {
        const double fy = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
        for (int x = 0; x < w; ++x) {
            const double fx = w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
            const double wave = 0.5 + 0.5 * std::sin(px * fx * 2 * M_PI + py * fy * 2 * M_PI + ph0);
            for (int c = 0; c < 3; ++c) {
                img.at(y, x, c) = std::clamp(0.15 + 0.7 * (0.6 * wave + 0.4 * base[c]), 0.0, 1.0);
            }
        }
    }
    return img;
}

ImageArray synth_class_image(int h, int w, int class_idx, uint64_t seed) {
    static const double palette[8][3] = {{0.85, 0.15, 0.15}, {0.15, 0.80, 0.20}, {0.20, 0.25, 0.85},
                                         {0.85, 0.80, 0.15}, {0.80, 0.20, 0.80}, {0.15, 0.80, 0.80},
                                         {0.55, 0.35, 0.15}, {0.60, 0.60, 0.60}};
    if (class_idx < 0 || class_idx >= 8) throw std::invalid_argument("synth_class_image: class must be in [0,8)");
    ImageArray img = synth_image(h, w, seed);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = std::clamp(palette[class_idx][c] + 0.15 * (img.at(y, x, c) - 0.5), 0.0, 1.0);
    return img;
}

ImageArray load_image_ref(const std::string& image_ref, const std::filesystem::path& root) {
    if (image_ref.rfind("synthc:", 0) == 0) {
        // synthc:WxH:class:seed
        int w = 0, h = 0, cls = 0;
        unsigned long long seed = 0;
        if (std::sscanf(image_ref.c_str(), "synthc:%dx%d:%d:%llu", &w, &h, &cls, &seed) != 4 || w < 1 ||
            h < 1)
            throw std::invalid_argument("bad synthc image_ref: " + image_ref);
        return synth_class_image(h, w, cls, seed);
    }
    if (image_ref.rfind("synth:", 0) == 0) {
        // synth:WxH:seed
        int w = 0, h = 0;
        unsigned long long seed = 0;
        if (std::sscanf(image_ref.c_str(), "synth:%dx%d:%llu", &w, &h, &seed) != 3 || w < 1 || h < 1)
            throw std::invalid_argument("bad synth image_ref: " + image_ref);
        return synth_image(h, w, seed);
    }
    std::filesystem::path p(image_ref);
    if (p.is_relative()) p = root / p;
    return read_ppm(p);
}

}  // namespace pathvlm
