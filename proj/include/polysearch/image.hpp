#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace polysearch {

/// 8-bit interleaved RGB, row-major.
class Image {
public:
    static constexpr std::size_t kChannels = 3;

    Image() = default;

    Image(std::size_t width, std::size_t height, std::uint8_t fill = 0)
        : width_(width), height_(height), pixels_(width * height * kChannels, fill)
    {
    }

    Image(std::size_t width, std::size_t height, std::vector<std::uint8_t> pixels)
        : width_(width), height_(height), pixels_(std::move(pixels))
    {
        if (pixels_.size() != width_ * height_ * kChannels) {
            throw std::invalid_argument("Image: buffer holds " + std::to_string(pixels_.size()) + " bytes, expected " +
                                        std::to_string(width_ * height_ * kChannels));
        }
    }

    std::size_t width() const { return width_; }
    std::size_t height() const { return height_; }
    std::size_t channels() const { return kChannels; }
    bool empty() const { return width_ == 0 || height_ == 0; }

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels_[(y * width_ + x) * kChannels + c]; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const
    {
        return pixels_[(y * width_ + x) * kChannels + c];
    }

    std::vector<std::uint8_t>& pixels() { return pixels_; }
    const std::vector<std::uint8_t>& pixels() const { return pixels_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// Nearest-neighbour resize.
inline Image resize_nearest(const Image& src, std::size_t width, std::size_t height)
{
    if (src.empty() || width == 0 || height == 0) {
        throw std::invalid_argument("resize_nearest: zero-area image");
    }
    if (src.width() == width && src.height() == height) {
        return src;
    }
    Image out(width, height);
    for (std::size_t y = 0; y < height; ++y) {
        const std::size_t sy = y * src.height() / height;
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t sx = x * src.width() / width;
            for (std::size_t c = 0; c < Image::kChannels; ++c) {
                out.at(x, y, c) = src.at(sx, sy, c);
            }
        }
    }
    return out;
}

} // namespace polysearch
