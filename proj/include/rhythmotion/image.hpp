#pragma once

#include <filesystem>
#include <vector>

namespace rhythmotion::img {

// Grayscale frame, values in [0,1], row-major.
struct Image {
    int w = 0, h = 0;
    std::vector<double> px;

    Image() = default;
    Image(int w_, int h_, double fill = 0.0) : w(w_), h(h_), px(static_cast<size_t>(w_) * h_, fill) {}

    double& at(int x, int y) { return px[static_cast<size_t>(y) * w + x]; }
    double at(int x, int y) const { return px[static_cast<size_t>(y) * w + x]; }
};

void write_pgm(const std::filesystem::path& path, const Image& im);
Image read_pgm(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& im);

// Animated grayscale GIF. Per-frame delays are accumulated in centiseconds so
// total container duration tracks frames/fps within one frame.
class GifWriter {
public:
    GifWriter(const std::filesystem::path& path, int w, int h, int fps);
    ~GifWriter();
    GifWriter(const GifWriter&) = delete;
    GifWriter& operator=(const GifWriter&) = delete;

    void add_frame(const Image& im);
    void finish();

    // Sum of emitted frame delays, seconds (for timing checks).
    double total_delay_seconds() const;

private:
    struct Impl;
    Impl* impl_;
};

// Total duration in seconds encoded in an existing GIF file's frame delays.
double gif_duration_seconds(const std::filesystem::path& path);

}  // namespace rhythmotion::img
