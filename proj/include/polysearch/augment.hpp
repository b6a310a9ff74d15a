#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "polysearch/image.hpp"
#include "polysearch/policy.hpp"
#include "polysearch/random.hpp"

namespace polysearch {

enum class AugCategory { Geometry, Color, Cutout };

inline constexpr std::array<AugCategory, 3> kAllCategories{AugCategory::Geometry, AugCategory::Color,
                                                           AugCategory::Cutout};

inline const char* to_string(AugCategory c)
{
    switch (c) {
    case AugCategory::Geometry:
        return "Geometry";
    case AugCategory::Color:
        return "Color";
    case AugCategory::Cutout:
        return "Cutout";
    }
    return "?";
}

inline AugCategory parse_category(std::string_view s)
{
    for (auto c : kAllCategories) {
        if (s == to_string(c)) {
            return c;
        }
    }
    throw std::invalid_argument("unknown augmentation category '" + std::string(s) + "'");
}

// Enumerators are in canonical pool order; the value is the genome column.
enum class AugKind {
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    AutoContrast,
    Invert,
    Equalize,
    Solarize,
    Posterize,
    Contrast,
    Color,
    Brightness,
    Sharpness,
    Cutout,
};

inline constexpr std::size_t kNumAugmentations = 15;

/// One transform of the pool. `magnitude` is the fixed strength used on
/// every application: shear factor, fraction of the image side for
/// translation and cutout, degrees for rotation, threshold for solarize,
/// bits kept for posterize, and the +/- deviation from the identity factor
/// for the four enhancement ops. Zero for parameterless ops.
struct AugmentationDescriptor {
    AugKind kind;
    std::string_view name;
    AugCategory category;
    double magnitude;
};

inline const std::array<AugmentationDescriptor, kNumAugmentations>& canonical_pool()
{
    static const std::array<AugmentationDescriptor, kNumAugmentations> pool{{
        {AugKind::ShearX, "ShearX", AugCategory::Geometry, 0.15},
        {AugKind::ShearY, "ShearY", AugCategory::Geometry, 0.15},
        {AugKind::TranslateX, "TranslateX", AugCategory::Geometry, 0.225},
        {AugKind::TranslateY, "TranslateY", AugCategory::Geometry, 0.225},
        {AugKind::Rotate, "Rotate", AugCategory::Geometry, 15.0},
        {AugKind::AutoContrast, "AutoContrast", AugCategory::Color, 0.0},
        {AugKind::Invert, "Invert", AugCategory::Color, 0.0},
        {AugKind::Equalize, "Equalize", AugCategory::Color, 0.0},
        {AugKind::Solarize, "Solarize", AugCategory::Color, 128.0},
        {AugKind::Posterize, "Posterize", AugCategory::Color, 4.0},
        {AugKind::Contrast, "Contrast", AugCategory::Color, 0.45},
        {AugKind::Color, "Color", AugCategory::Color, 0.45},
        {AugKind::Brightness, "Brightness", AugCategory::Color, 0.45},
        {AugKind::Sharpness, "Sharpness", AugCategory::Color, 0.45},
        {AugKind::Cutout, "Cutout", AugCategory::Cutout, 0.2},
    }};
    return pool;
}

inline const AugmentationDescriptor& descriptor(AugKind k) { return canonical_pool()[static_cast<std::size_t>(k)]; }

inline std::optional<std::size_t> find_augmentation(std::string_view name)
{
    const auto& pool = canonical_pool();
    for (std::size_t j = 0; j < pool.size(); ++j) {
        if (pool[j].name == name) {
            return j;
        }
    }
    return std::nullopt;
}

inline std::vector<std::string> canonical_names()
{
    std::vector<std::string> out;
    for (const auto& d : canonical_pool()) {
        out.emplace_back(d.name);
    }
    return out;
}

/// Permutation of the three categories; transforms are applied category by category.
class CategoryOrder {
public:
    CategoryOrder() = default;

    explicit CategoryOrder(std::array<AugCategory, 3> seq) : seq_(seq)
    {
        for (auto c : kAllCategories) {
            if (std::count(seq_.begin(), seq_.end(), c) != 1) {
                throw std::invalid_argument("CategoryOrder: must contain each category exactly once");
            }
        }
    }

    /// Parses "Geometry>Color>Cutout".
    static CategoryOrder parse(std::string_view s)
    {
        std::array<AugCategory, 3> seq{};
        std::size_t n = 0;
        std::size_t pos = 0;
        while (true) {
            const auto gt = s.find('>', pos);
            const auto tok = s.substr(pos, gt == std::string_view::npos ? std::string_view::npos : gt - pos);
            if (n == 3) {
                throw std::invalid_argument("CategoryOrder: too many categories in '" + std::string(s) + "'");
            }
            seq[n++] = parse_category(tok);
            if (gt == std::string_view::npos) {
                break;
            }
            pos = gt + 1;
        }
        if (n != 3) {
            throw std::invalid_argument("CategoryOrder: expected three categories in '" + std::string(s) + "'");
        }
        return CategoryOrder(seq);
    }

    /// All six orders, Geometry>Color>Cutout first.
    static std::vector<CategoryOrder> all()
    {
        std::array<int, 3> idx{0, 1, 2};
        std::vector<CategoryOrder> out;
        do {
            out.emplace_back(std::array{kAllCategories[idx[0]], kAllCategories[idx[1]], kAllCategories[idx[2]]});
        } while (std::next_permutation(idx.begin(), idx.end()));
        return out;
    }

    const std::array<AugCategory, 3>& sequence() const { return seq_; }

    std::string to_string() const
    {
        return std::string(polysearch::to_string(seq_[0])) + ">" + polysearch::to_string(seq_[1]) + ">" +
               polysearch::to_string(seq_[2]);
    }

    friend bool operator==(const CategoryOrder&, const CategoryOrder&) = default;

private:
    std::array<AugCategory, 3> seq_{AugCategory::Geometry, AugCategory::Color, AugCategory::Cutout};
};

// ---------------------------------------------------------------------------
// pixel kernels with explicit parameters

namespace kernels {

inline constexpr std::uint8_t kFill = 128;

inline std::uint8_t clamp_round(double v)
{
    return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

inline void require_area(const Image& img)
{
    if (img.empty()) {
        throw std::invalid_argument("augmentation on zero-area image");
    }
}

/// Inverse-mapped nearest-neighbour warp; `src_of` maps output to source coordinates.
template <typename Map>
Image warp(const Image& img, Map src_of)
{
    require_area(img);
    Image out(img.width(), img.height(), kFill);
    const auto w = static_cast<long long>(img.width());
    const auto h = static_cast<long long>(img.height());
    for (long long y = 0; y < h; ++y) {
        for (long long x = 0; x < w; ++x) {
            const auto [fx, fy] = src_of(static_cast<double>(x), static_cast<double>(y));
            const auto sx = static_cast<long long>(std::floor(fx + 0.5));
            const auto sy = static_cast<long long>(std::floor(fy + 0.5));
            if (sx < 0 || sy < 0 || sx >= w || sy >= h) {
                continue;
            }
            for (std::size_t c = 0; c < Image::kChannels; ++c) {
                out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) =
                    img.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), c);
            }
        }
    }
    return out;
}

/// Horizontal shear about the image centre.
inline Image shear_x(const Image& img, double factor)
{
    const double cy = (static_cast<double>(img.height()) - 1.0) / 2.0;
    return warp(img, [&](double x, double y) { return std::pair{x + factor * (y - cy), y}; });
}

inline Image shear_y(const Image& img, double factor)
{
    const double cx = (static_cast<double>(img.width()) - 1.0) / 2.0;
    return warp(img, [&](double x, double y) { return std::pair{x, y + factor * (x - cx)}; });
}

/// Content moves right by `dx` pixels.
inline Image translate_x(const Image& img, long long dx)
{
    return warp(img, [&](double x, double y) { return std::pair{x - static_cast<double>(dx), y}; });
}

inline Image translate_y(const Image& img, long long dy)
{
    return warp(img, [&](double x, double y) { return std::pair{x, y - static_cast<double>(dy)}; });
}

/// Rotation about the centre by `degrees`, counter-clockwise on screen.
inline Image rotate(const Image& img, double degrees)
{
    const double rad = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(rad);
    const double sn = std::sin(rad);
    const double cx = (static_cast<double>(img.width()) - 1.0) / 2.0;
    const double cy = (static_cast<double>(img.height()) - 1.0) / 2.0;
    return warp(img, [&](double x, double y) {
        const double dx = x - cx;
        const double dy = y - cy;
        return std::pair{cx + dx * cs - dy * sn, cy + dx * sn + dy * cs};
    });
}

template <typename Lut>
Image map_per_channel(const Image& img, Lut make_lut)
{
    require_area(img);
    Image out = img;
    for (std::size_t c = 0; c < Image::kChannels; ++c) {
        std::array<std::uint64_t, 256> hist{};
        for (std::size_t i = c; i < img.pixels().size(); i += Image::kChannels) {
            ++hist[img.pixels()[i]];
        }
        const std::array<std::uint8_t, 256> lut = make_lut(hist);
        for (std::size_t i = c; i < out.pixels().size(); i += Image::kChannels) {
            out.pixels()[i] = lut[out.pixels()[i]];
        }
    }
    return out;
}

inline std::array<std::uint8_t, 256> identity_lut()
{
    std::array<std::uint8_t, 256> lut{};
    for (int v = 0; v < 256; ++v) {
        lut[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(v);
    }
    return lut;
}

/// Per-channel linear stretch of [min, max] onto [0, 255]; constant channels unchanged.
inline Image auto_contrast(const Image& img)
{
    return map_per_channel(img, [](const std::array<std::uint64_t, 256>& hist) {
        int lo = 0;
        while (lo < 256 && hist[static_cast<std::size_t>(lo)] == 0) {
            ++lo;
        }
        int hi = 255;
        while (hi >= 0 && hist[static_cast<std::size_t>(hi)] == 0) {
            --hi;
        }
        auto lut = identity_lut();
        if (hi <= lo) {
            return lut;
        }
        for (int v = 0; v < 256; ++v) {
            // integer rounding keeps lo->0, hi->255 exact, so a stretched channel maps to itself
            const int num = std::clamp(v - lo, 0, hi - lo) * 255;
            lut[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>((2 * num + (hi - lo)) / (2 * (hi - lo)));
        }
        return lut;
    });
}

inline Image invert(const Image& img)
{
    require_area(img);
    Image out = img;
    for (auto& v : out.pixels()) {
        v = static_cast<std::uint8_t>(255 - v);
    }
    return out;
}

/// Histogram equalisation v -> round(255 * cdf(v) / N) per channel.
///
/// The cdf is not shifted by its minimum, which makes the mapping exactly
/// idempotent: after one pass, the cdf at each output level equals the cdf
/// of the largest input level mapped there. Constant channels are left as is.
inline Image equalize(const Image& img)
{
    return map_per_channel(img, [](const std::array<std::uint64_t, 256>& hist) {
        std::uint64_t total = 0;
        std::size_t occupied = 0;
        for (auto h : hist) {
            total += h;
            occupied += h > 0 ? 1 : 0;
        }
        auto lut = identity_lut();
        if (occupied <= 1) {
            return lut;
        }
        std::uint64_t cdf = 0;
        for (std::size_t v = 0; v < 256; ++v) {
            cdf += hist[v];
            lut[v] = static_cast<std::uint8_t>((2 * 255 * cdf + total) / (2 * total));
        }
        return lut;
    });
}

/// v >= threshold -> 255 - v. A threshold of 256 is the identity.
inline Image solarize(const Image& img, int threshold)
{
    require_area(img);
    Image out = img;
    for (auto& v : out.pixels()) {
        if (static_cast<int>(v) >= threshold) {
            v = static_cast<std::uint8_t>(255 - v);
        }
    }
    return out;
}

/// Keeps the `bits` most significant bits of every channel value.
inline Image posterize(const Image& img, int bits)
{
    require_area(img);
    if (bits < 0 || bits > 8) {
        throw std::invalid_argument("posterize: bits must lie in [0, 8]");
    }
    const auto mask = static_cast<std::uint8_t>(bits == 0 ? 0 : (0xFF << (8 - bits)) & 0xFF);
    Image out = img;
    for (auto& v : out.pixels()) {
        v = static_cast<std::uint8_t>(v & mask);
    }
    return out;
}

inline double luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    return (299.0 * r + 587.0 * g + 114.0 * b) / 1000.0;
}

/// (1 - f) * degenerate + f * img, rounded and clamped.
inline Image blend(const Image& degenerate, const Image& img, double factor)
{
    Image out = img;
    for (std::size_t i = 0; i < out.pixels().size(); ++i) {
        const double d = degenerate.pixels()[i];
        out.pixels()[i] = clamp_round(d + factor * (static_cast<double>(img.pixels()[i]) - d));
    }
    return out;
}

inline Image contrast(const Image& img, double factor)
{
    require_area(img);
    double sum = 0.0;
    const auto& p = img.pixels();
    for (std::size_t i = 0; i < p.size(); i += 3) {
        sum += std::floor(luminance(p[i], p[i + 1], p[i + 2]) + 0.5);
    }
    const auto mean = clamp_round(sum / static_cast<double>(img.width() * img.height()));
    return blend(Image(img.width(), img.height(), mean), img, factor);
}

inline Image color(const Image& img, double factor)
{
    require_area(img);
    Image gray = img;
    auto& p = gray.pixels();
    for (std::size_t i = 0; i < p.size(); i += 3) {
        const auto l = clamp_round(luminance(p[i], p[i + 1], p[i + 2]));
        p[i] = p[i + 1] = p[i + 2] = l;
    }
    return blend(gray, img, factor);
}

inline Image brightness(const Image& img, double factor)
{
    require_area(img);
    return blend(Image(img.width(), img.height(), 0), img, factor);
}

/// Blend against a 3x3 smoothed copy (centre weight 5, neighbours 1). Border pixels have no full
/// neighbourhood and keep their value in the smoothed copy.
inline Image sharpness(const Image& img, double factor)
{
    require_area(img);
    Image smooth = img;
    const std::size_t w = img.width();
    const std::size_t h = img.height();
    for (std::size_t y = 1; y + 1 < h; ++y) {
        for (std::size_t x = 1; x + 1 < w; ++x) {
            for (std::size_t c = 0; c < Image::kChannels; ++c) {
                int acc = 4 * img.at(x, y, c);
                for (std::size_t yy = y - 1; yy <= y + 1; ++yy) {
                    for (std::size_t xx = x - 1; xx <= x + 1; ++xx) {
                        acc += img.at(xx, yy, c);
                    }
                }
                smooth.at(x, y, c) = static_cast<std::uint8_t>((2 * acc + 13) / 26);
            }
        }
    }
    return blend(smooth, img, factor);
}

/// Square patch of `side` pixels starting at (cx - side/2, cy - side/2), clipped, set to `fill`.
inline Image cutout(const Image& img, long long cx, long long cy, long long side, std::uint8_t fill = kFill)
{
    require_area(img);
    Image out = img;
    const auto w = static_cast<long long>(img.width());
    const auto h = static_cast<long long>(img.height());
    const long long x0 = std::max(0LL, cx - side / 2);
    const long long y0 = std::max(0LL, cy - side / 2);
    const long long x1 = std::min(w, cx - side / 2 + side);
    const long long y1 = std::min(h, cy - side / 2 + side);
    for (long long y = y0; y < y1; ++y) {
        for (long long x = x0; x < x1; ++x) {
            for (std::size_t c = 0; c < Image::kChannels; ++c) {
                out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = fill;
            }
        }
    }
    return out;
}

inline long long cutout_side(const Image& img, double fraction)
{
    return static_cast<long long>(std::floor(fraction * static_cast<double>(std::min(img.width(), img.height()))));
}

} // namespace kernels

// ---------------------------------------------------------------------------

/// Number of transforms applied process-wide. Instrumentation for tests that
/// must prove no augmentation happens on a code path.
inline std::atomic<std::uint64_t>& transform_counter()
{
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}

/// Applies one pool transform at its fixed magnitude. Symmetric magnitudes get a random sign and
/// cutout a random centre, both drawn from `rng`.
inline Image apply_transform(const AugmentationDescriptor& desc, const Image& img, Rng& rng)
{
    kernels::require_area(img);
    transform_counter().fetch_add(1, std::memory_order_relaxed);
    const double m = desc.magnitude;
    auto signed_m = [&] { return coin_flip(rng) ? m : -m; };
    switch (desc.kind) {
    case AugKind::ShearX:
        return kernels::shear_x(img, signed_m());
    case AugKind::ShearY:
        return kernels::shear_y(img, signed_m());
    case AugKind::TranslateX:
        return kernels::translate_x(img, std::llround(signed_m() * static_cast<double>(img.width())));
    case AugKind::TranslateY:
        return kernels::translate_y(img, std::llround(signed_m() * static_cast<double>(img.height())));
    case AugKind::Rotate:
        return kernels::rotate(img, signed_m());
    case AugKind::AutoContrast:
        return kernels::auto_contrast(img);
    case AugKind::Invert:
        return kernels::invert(img);
    case AugKind::Equalize:
        return kernels::equalize(img);
    case AugKind::Solarize:
        return kernels::solarize(img, static_cast<int>(m));
    case AugKind::Posterize:
        return kernels::posterize(img, static_cast<int>(m));
    case AugKind::Contrast:
        return kernels::contrast(img, 1.0 + signed_m());
    case AugKind::Color:
        return kernels::color(img, 1.0 + signed_m());
    case AugKind::Brightness:
        return kernels::brightness(img, 1.0 + signed_m());
    case AugKind::Sharpness:
        return kernels::sharpness(img, 1.0 + signed_m());
    case AugKind::Cutout: {
        const auto cx = static_cast<long long>(uniform_int(rng, 0, img.width() - 1));
        const auto cy = static_cast<long long>(uniform_int(rng, 0, img.height() - 1));
        return kernels::cutout(img, cx, cy, kernels::cutout_side(img, m));
    }
    }
    throw std::logic_error("apply_transform: unknown kind");
}

/// Class-conditional augmentation. Categories are visited in `order`, and within a category the
/// transforms in pool order; transform j fires with probability policy(class_id, j). Returns the
/// number of transforms that fired; `img` is modified in place.
inline std::size_t apply_policy_inplace(Image& img, std::size_t class_id, const PolicyMatrix& policy,
                                        const CategoryOrder& order, Rng& rng)
{
    if (policy.num_augs() != kNumAugmentations) {
        throw std::invalid_argument("apply_policy: policy must have " + std::to_string(kNumAugmentations) +
                                    " augmentation columns");
    }
    if (class_id >= policy.num_classes()) {
        throw std::invalid_argument("apply_policy: class id " + std::to_string(class_id) + " out of range");
    }
    kernels::require_area(img);
    const auto row = policy.row(class_id);
    const auto& pool = canonical_pool();
    std::size_t fired = 0;
    for (auto cat : order.sequence()) {
        for (std::size_t j = 0; j < pool.size(); ++j) {
            if (pool[j].category != cat) {
                continue;
            }
            if (uniform01(rng) < row[j]) {
                img = apply_transform(pool[j], img, rng);
                ++fired;
            }
        }
    }
    return fired;
}

inline Image apply_policy(const Image& img, std::size_t class_id, const PolicyMatrix& policy,
                          const CategoryOrder& order, Rng& rng)
{
    Image out = img;
    apply_policy_inplace(out, class_id, policy, order, rng);
    return out;
}

} // namespace polysearch
