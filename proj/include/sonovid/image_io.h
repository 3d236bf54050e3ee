// image_io.h — PNG-backed frame storage. Pixels live in [-1, 1] float,
// channel-major; files are 8-bit RGB.
#pragma once

#include <string>
#include <vector>

namespace sonovid {

struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> pixels;  // [C,H,W] row-major, range [-1,1]

    Image() = default;
    Image(int c, int h, int w) : channels(c), height(h), width(w),
        pixels(static_cast<std::size_t>(c) * h * w, 0.0f) {}

    float& at(int c, int y, int x) {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

// Quantization used on disk: byte = clamp(round((v + 1) * 127.5), 0, 255),
// v = byte / 127.5 - 1. write(read(x)) is the identity on quantized values.
unsigned char pixel_to_byte(float v);
float byte_to_pixel(unsigned char b);

void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

struct VideoClip {
    int fps = 0;
    std::vector<Image> frames;
};

}  // namespace sonovid
