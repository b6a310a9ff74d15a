#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "polysearch/image.hpp"
#include "polysearch/random.hpp"

namespace polysearch {

enum class Split : std::uint8_t { Train, Val, Test };

inline const char* to_string(Split s)
{
    switch (s) {
    case Split::Train:
        return "train";
    case Split::Val:
        return "val";
    case Split::Test:
        return "test";
    }
    return "?";
}

/// How many times each split's index list has been requested, process-wide.
/// Lets tests prove the search never reads the test split.
inline std::atomic<std::uint64_t>& split_access_counter(Split s)
{
    static std::array<std::atomic<std::uint64_t>, 3> counters{};
    return counters[static_cast<std::size_t>(s)];
}

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LabeledImageDataset {
    std::vector<Image> images;
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;
    std::vector<Split> tags; // empty until split; then one per sample

    std::size_t size() const { return images.size(); }
    std::size_t num_classes() const { return class_names.size(); }

    /// Sample indices carrying `split`, ascending.
    std::vector<std::size_t> indices(Split split) const
    {
        split_access_counter(split).fetch_add(1, std::memory_order_relaxed);
        if (tags.size() != images.size()) {
            throw std::logic_error("dataset has not been split");
        }
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < tags.size(); ++i) {
            if (tags[i] == split) {
                out.push_back(i);
            }
        }
        return out;
    }

    std::vector<std::size_t> class_counts() const
    {
        std::vector<std::size_t> n(num_classes(), 0);
        for (auto l : labels) {
            ++n.at(l);
        }
        return n;
    }

    void validate() const
    {
        if (labels.size() != images.size() || (!tags.empty() && tags.size() != images.size())) {
            throw std::invalid_argument("dataset: images, labels and tags differ in length");
        }
        for (auto l : labels) {
            if (l >= num_classes()) {
                throw std::invalid_argument("dataset: label " + std::to_string(l) + " out of range");
            }
        }
        if (!tags.empty()) {
            std::vector<bool> in_train(num_classes(), false);
            for (std::size_t i = 0; i < tags.size(); ++i) {
                if (tags[i] == Split::Train) {
                    in_train[labels[i]] = true;
                }
            }
            for (std::size_t c = 0; c < num_classes(); ++c) {
                if (!in_train[c]) {
                    throw std::invalid_argument("dataset: class '" + class_names[c] + "' missing from train split");
                }
            }
        }
    }
};

struct SplitFractions {
    double train = 0.80;
    double val = 0.09;
    double test = 0.11;
};

/// Per-class counts for `n` samples under largest-remainder rounding.
/// Ties in the remainder go to the earlier split (train, val, test).
inline std::array<std::size_t, 3> split_counts(std::size_t n, const SplitFractions& f)
{
    const std::array<double, 3> frac{f.train, f.val, f.test};
    std::array<std::size_t, 3> count{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double quota = frac[k] * static_cast<double>(n);
        // absorb representation error so 0.09 * 100 counts as exactly 9
        const double fl = std::floor(quota + 1e-9);
        count[k] = static_cast<std::size_t>(fl);
        rem[k] = quota - fl;
        assigned += count[k];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; assigned < n; k = (k + 1) % 3) {
        ++count[order[k]];
        ++assigned;
    }
    return count;
}

/// Shuffles each class with `seed` and partitions it by `fractions`.
inline LabeledImageDataset stratified_split(LabeledImageDataset ds, const SplitFractions& fractions, Seed seed)
{
    if (!(fractions.train > 0.0 && fractions.val > 0.0 && fractions.test > 0.0)) {
        throw std::invalid_argument("stratified_split: every fraction must be positive");
    }
    if (std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9) {
        throw std::invalid_argument("stratified_split: fractions must sum to 1");
    }
    ds.tags.assign(ds.size(), Split::Train);
    for (std::size_t c = 0; c < ds.num_classes(); ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.labels[i] == c) {
                members.push_back(i);
            }
        }
        if (members.size() < 3) {
            throw std::invalid_argument("stratified_split: class '" + ds.class_names[c] + "' has " +
                                        std::to_string(members.size()) + " samples, need at least 3");
        }
        const auto counts = split_counts(members.size(), fractions);
        if (counts[0] == 0 || counts[1] == 0) {
            throw std::invalid_argument("stratified_split: class '" + ds.class_names[c] +
                                        "' too small to populate train and val");
        }
        auto rng = make_rng(mix_seed({seed, c}));
        for (std::size_t i = members.size(); i > 1; --i) {
            std::swap(members[i - 1], members[uniform_int(rng, 0, i - 1)]);
        }
        for (std::size_t k = 0; k < members.size(); ++k) {
            ds.tags[members[k]] = k < counts[0] ? Split::Train : k < counts[0] + counts[1] ? Split::Val : Split::Test;
        }
    }
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// IDX archives (big-endian magic + dims header, unsigned byte payload)

namespace detail {

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset, const char* what)
{
    if (offset + 4 > buf.size()) {
        throw FormatError(std::string(what) + ": truncated header at offset " + std::to_string(offset));
    }
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

inline std::vector<std::uint8_t> read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parses in-memory IDX image and label archives. Grayscale is replicated to
/// RGB; when `resize_side` is non-zero images are resized to that square side.
inline LabeledImageDataset parse_idx(const std::vector<std::uint8_t>& image_bytes,
                                     const std::vector<std::uint8_t>& label_bytes, std::size_t resize_side = 0)
{
    const auto img_magic = detail::read_be32(image_bytes, 0, "IDX images");
    if (img_magic != kIdxImageMagic) {
        throw FormatError("IDX images: bad magic at offset 0");
    }
    const auto lbl_magic = detail::read_be32(label_bytes, 0, "IDX labels");
    if (lbl_magic != kIdxLabelMagic) {
        throw FormatError("IDX labels: bad magic at offset 0");
    }
    const std::size_t n_img = detail::read_be32(image_bytes, 4, "IDX images");
    const std::size_t rows = detail::read_be32(image_bytes, 8, "IDX images");
    const std::size_t cols = detail::read_be32(image_bytes, 12, "IDX images");
    const std::size_t n_lbl = detail::read_be32(label_bytes, 4, "IDX labels");
    if (n_img != n_lbl) {
        throw FormatError("IDX: image count " + std::to_string(n_img) + " (offset 4) does not match label count " +
                          std::to_string(n_lbl) + " (offset 4)");
    }
    if (rows == 0 || cols == 0) {
        throw FormatError("IDX images: zero image dimension at offset 8");
    }
    const std::size_t img_payload = 16;
    const std::size_t lbl_payload = 8;
    if (image_bytes.size() < img_payload + n_img * rows * cols) {
        throw FormatError("IDX images: truncated payload at offset " + std::to_string(image_bytes.size()));
    }
    if (label_bytes.size() < lbl_payload + n_lbl) {
        throw FormatError("IDX labels: truncated payload at offset " + std::to_string(label_bytes.size()));
    }
    LabeledImageDataset ds;
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < n_img; ++i) {
        Image img(cols, rows);
        const std::uint8_t* src = image_bytes.data() + img_payload + i * rows * cols;
        for (std::size_t p = 0; p < rows * cols; ++p) {
            img.pixels()[3 * p] = img.pixels()[3 * p + 1] = img.pixels()[3 * p + 2] = src[p];
        }
        ds.images.push_back(resize_side ? resize_nearest(img, resize_side, resize_side) : std::move(img));
        ds.labels.push_back(label_bytes[lbl_payload + i]);
        max_label = std::max<std::size_t>(max_label, label_bytes[lbl_payload + i]);
    }
    for (std::size_t c = 0; c <= max_label && n_img > 0; ++c) {
        ds.class_names.push_back(std::to_string(c));
    }
    return ds;
}

inline LabeledImageDataset load_idx(const std::string& images_path, const std::string& labels_path,
                                    std::size_t resize_side = 0)
{
    return parse_idx(detail::read_file(images_path), detail::read_file(labels_path), resize_side);
}

/// Serializes grayscale (channel 0) images and labels as an IDX pair.
inline std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> encode_idx(const LabeledImageDataset& ds)
{
    auto put32 = [](std::vector<std::uint8_t>& b, std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) {
            b.push_back(static_cast<std::uint8_t>(v >> s));
        }
    };
    std::vector<std::uint8_t> img, lbl;
    const std::size_t w = ds.size() ? ds.images[0].width() : 0;
    const std::size_t h = ds.size() ? ds.images[0].height() : 0;
    put32(img, kIdxImageMagic);
    put32(img, static_cast<std::uint32_t>(ds.size()));
    put32(img, static_cast<std::uint32_t>(h));
    put32(img, static_cast<std::uint32_t>(w));
    put32(lbl, kIdxLabelMagic);
    put32(lbl, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.images[i].width() != w || ds.images[i].height() != h) {
            throw std::invalid_argument("encode_idx: images differ in size");
        }
        for (std::size_t p = 0; p < w * h; ++p) {
            img.push_back(ds.images[i].pixels()[3 * p]);
        }
        lbl.push_back(static_cast<std::uint8_t>(ds.labels[i]));
    }
    return {std::move(img), std::move(lbl)};
}

// ---------------------------------------------------------------------------
// synthetic confounder corpus

enum class ClassRecipe {
    Hue,        // fixed shape, identity carried by hue
    Shape,      // fixed hue, identity carried by contour
    Texture,    // fixed hue and shape, identity carried by a stripe texture
    Confounded, // same shape and hue as the texture class, subtly different texture
};

inline const char* to_string(ClassRecipe r)
{
    switch (r) {
    case ClassRecipe::Hue:
        return "hue";
    case ClassRecipe::Shape:
        return "shape";
    case ClassRecipe::Texture:
        return "texture";
    case ClassRecipe::Confounded:
        return "confounded";
    }
    return "?";
}

struct SynthConfig {
    std::vector<ClassRecipe> recipes{ClassRecipe::Hue, ClassRecipe::Shape, ClassRecipe::Texture,
                                     ClassRecipe::Confounded};
    std::size_t images_per_class = 200;
    std::size_t image_side = 64;
    double noise_level = 20.0; // std-dev of additive per-pixel noise, in 8-bit units
    Seed seed = 1;

    std::size_t num_classes() const { return recipes.size(); }

    void validate() const
    {
        if (recipes.size() < 2) {
            throw std::invalid_argument("SynthConfig: need at least two classes");
        }
        if (std::count(recipes.begin(), recipes.end(), ClassRecipe::Hue) < 1 ||
            std::count(recipes.begin(), recipes.end(), ClassRecipe::Shape) < 1) {
            throw std::invalid_argument("SynthConfig: need at least one hue-defined and one shape-defined class");
        }
        const auto confounded = std::count(recipes.begin(), recipes.end(), ClassRecipe::Confounded);
        if (confounded > 0 && std::count(recipes.begin(), recipes.end(), ClassRecipe::Texture) < 1) {
            throw std::invalid_argument("SynthConfig: a confounded class needs a texture-defined partner");
        }
        if (images_per_class < 1) {
            throw std::invalid_argument("SynthConfig: images_per_class must be positive");
        }
        if (image_side < 16) {
            throw std::invalid_argument("SynthConfig: image_side must be at least 16");
        }
        if (!(noise_level >= 0.0)) {
            throw std::invalid_argument("SynthConfig: noise_level must be non-negative");
        }
    }
};

namespace detail {

struct Rgb {
    double r, g, b;
};

// Hue-defined classes cycle through these; every other class uses kBodyColor.
// Luminance is about 130 for the hue colours and 125 for the body, so a grey
// version of an object is identified by its outline and stripes alone. The
// first hue colour is the RGB complement of the body colour.
inline constexpr std::array<Rgb, 3> kHueColors{{{195, 85, 195}, {85, 133, 235}, {195, 115, 40}}};
inline constexpr Rgb kBodyColor{60, 170, 60};

inline constexpr double kSynthBackground = 118.0; // plus up to 20 per image
inline constexpr double kSynthRadius = 0.18;      // object radius, fraction of the side
inline constexpr double kSynthRadiusSpread = 0.04;
inline constexpr double kSynthJitter = 0.2; // centre offset, fraction of the side
inline constexpr double kStripePeriod = 8.0; // pixels
inline constexpr double kStripeAmplitude = 10.0;
inline constexpr double kConfoundedAmplitude = 8.0;

/// Signed inside-test for the class silhouettes, in object-normalised coordinates (|u|,|v| <= ~1).
inline bool inside_disk(double u, double v) { return u * u + v * v <= 1.0; }

inline bool inside_cross(double u, double v)
{
    const double arm = 0.38;
    return (std::abs(u) <= arm && std::abs(v) <= 1.0) || (std::abs(v) <= arm && std::abs(u) <= 1.0);
}

} // namespace detail

/// Renders the synthetic corpus. Each image is a noisy mid-grey field with a
/// single object whose centre, size and illumination vary per sample; only
/// the class recipe decides what identifies it. Texture stripes are anchored
/// to the image grid rather than to the object, so a pixel-space probe can
/// read them as long as the picture is not moved.
inline LabeledImageDataset generate_confounder(const SynthConfig& cfg)
{
    cfg.validate();
    LabeledImageDataset ds;
    std::size_t hue_rank = 0;
    std::vector<std::size_t> hue_index(cfg.num_classes(), 0);
    for (std::size_t c = 0; c < cfg.num_classes(); ++c) {
        if (cfg.recipes[c] == ClassRecipe::Hue) {
            hue_index[c] = hue_rank++;
        }
        ds.class_names.push_back(std::string(to_string(cfg.recipes[c])) + std::to_string(c));
    }
    const auto side = static_cast<double>(cfg.image_side);
    for (std::size_t c = 0; c < cfg.num_classes(); ++c) {
        const ClassRecipe recipe = cfg.recipes[c];
        for (std::size_t k = 0; k < cfg.images_per_class; ++k) {
            auto rng = make_rng(mix_seed({cfg.seed, c, k}));
            const double radius = side * (detail::kSynthRadius + detail::kSynthRadiusSpread * uniform01(rng));
            const double cx = side / 2.0 + side * detail::kSynthJitter * (2.0 * uniform01(rng) - 1.0);
            const double cy = side / 2.0 + side * detail::kSynthJitter * (2.0 * uniform01(rng) - 1.0);
            const double gain = 0.85 + 0.3 * uniform01(rng);
            const double cast_r = 10.0 * (2.0 * uniform01(rng) - 1.0);
            const double cast_b = 10.0 * (2.0 * uniform01(rng) - 1.0);
            const double bg = detail::kSynthBackground + 20.0 * uniform01(rng);

            const detail::Rgb base = recipe == ClassRecipe::Hue
                                         ? detail::kHueColors[hue_index[c] % detail::kHueColors.size()]
                                         : detail::kBodyColor;
            // the confounded partner carries the same stripes in opposite phase, and weaker
            const double stripe_amp = recipe == ClassRecipe::Texture      ? detail::kStripeAmplitude
                                      : recipe == ClassRecipe::Confounded ? -detail::kConfoundedAmplitude
                                                                          : 0.0;

            Image img(cfg.image_side, cfg.image_side);
            for (std::size_t y = 0; y < cfg.image_side; ++y) {
                const double stripe =
                    stripe_amp * std::sin(2.0 * std::numbers::pi * (static_cast<double>(y) + 0.5) / detail::kStripePeriod);
                for (std::size_t x = 0; x < cfg.image_side; ++x) {
                    const double u = (static_cast<double>(x) + 0.5 - cx) / radius;
                    const double v = (static_cast<double>(y) + 0.5 - cy) / radius;
                    const bool in = recipe == ClassRecipe::Shape ? detail::inside_cross(u, v)
                                                                 : detail::inside_disk(u, v);
                    detail::Rgb px{bg, bg, bg};
                    if (in) {
                        px = {base.r + stripe, base.g + stripe, base.b + stripe};
                        px.r = px.r * gain + cast_r;
                        px.g = px.g * gain;
                        px.b = px.b * gain + cast_b;
                    }
                    const std::array<double, 3> ch{px.r, px.g, px.b};
                    for (std::size_t ci = 0; ci < 3; ++ci) {
                        const double noisy = ch[ci] + cfg.noise_level * normal01(rng);
                        img.at(x, y, ci) = static_cast<std::uint8_t>(std::clamp(std::floor(noisy + 0.5), 0.0, 255.0));
                    }
                }
            }
            ds.images.push_back(std::move(img));
            ds.labels.push_back(c);
        }
    }
    return ds;
}

} // namespace polysearch
