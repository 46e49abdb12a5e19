#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pathvlm {

// H x W x 3 image, channel-interleaved, values in [0,1].
struct ImageArray {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // size height*width*3, index (y*width + x)*3 + c

    ImageArray() = default;
    ImageArray(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0.0) {}

    double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

    // all values finite and in [0,1], exactly 3 channels, h/w >= 1
    void validate() const;
};

// Bilinear resize with corner-aligned sampling. out dims must be >= 1.
ImageArray resize_bilinear(const ImageArray& src, int out_h, int out_w);

// Zero-pad bottom/right so both dims are multiples of `multiple`.
ImageArray pad_to_multiple(const ImageArray& src, int multiple);

// Binary PPM (P6, 8-bit) round trip. Quantizes to 8 bits on write.
void write_ppm(const ImageArray& img, const std::filesystem::path& path);
ImageArray read_ppm(const std::filesystem::path& path);

// Deterministic procedural image for fixtures and tests. Also reachable via
// the "synth:WxH:seed" image_ref scheme.
ImageArray synth_image(int h, int w, uint64_t seed);

// Class-keyed variant: a fixed per-class color dominates, with seeded
// low-amplitude texture on top. Reachable via "synthc:WxH:class:seed".
ImageArray synth_class_image(int h, int w, int class_idx, uint64_t seed);

// Resolve an image_ref: "synth:WxH:seed", "synthc:WxH:class:seed", or a path
// to a .ppm file (relative refs resolved against `root`).
ImageArray load_image_ref(const std::string& image_ref, const std::filesystem::path& root);

}  // namespace pathvlm
