#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "polysearch/augment.hpp"
#include "polysearch/dataset.hpp"
#include "polysearch/image.hpp"
#include "polysearch/metrics.hpp"
#include "polysearch/policy.hpp"
#include "polysearch/random.hpp"

namespace polysearch {

/// Training diverged or otherwise produced no usable head. The search maps
/// this to a failed (-inf) fitness.
class EvaluationFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class FeatureKind { RawPixels, HOG };

/// Frozen feature map from a fixed-size image to a real vector.
///
/// RawPixels scales the interleaved bytes to [0, 1]. HOG follows the
/// Dalal-Triggs layout: centred [-1, 0, 1] gradients on luminance, 8x8
/// pixel cells with 9 unsigned orientation bins (linear vote between
/// neighbouring bins), 2x2-cell blocks at one-cell stride, each block
/// L2-normalised as v / sqrt(|v|^2 + eps^2).
class FeatureExtractor {
public:
    static constexpr std::size_t kHogCell = 8;
    static constexpr std::size_t kHogBins = 9;
    static constexpr std::size_t kHogBlock = 2;
    static constexpr double kHogEpsilon = 1e-6;

    FeatureExtractor(FeatureKind kind, std::size_t width, std::size_t height)
        : kind_(kind), width_(width), height_(height)
    {
        if (width == 0 || height == 0) {
            throw std::invalid_argument("FeatureExtractor: zero image size");
        }
        if (kind == FeatureKind::HOG &&
            (width % kHogCell != 0 || height % kHogCell != 0 || width < kHogCell * kHogBlock ||
             height < kHogCell * kHogBlock)) {
            throw std::invalid_argument("FeatureExtractor: HOG needs sides that are multiples of 8 and at least 16");
        }
    }

    FeatureKind kind() const { return kind_; }
    std::size_t width() const { return width_; }
    std::size_t height() const { return height_; }

    std::size_t output_dim() const
    {
        if (kind_ == FeatureKind::RawPixels) {
            return width_ * height_ * Image::kChannels;
        }
        const std::size_t bx = width_ / kHogCell - kHogBlock + 1;
        const std::size_t by = height_ / kHogCell - kHogBlock + 1;
        return bx * by * kHogBlock * kHogBlock * kHogBins;
    }

    void extract(const Image& img, std::span<double> out) const
    {
        if (img.width() != width_ || img.height() != height_) {
            throw std::invalid_argument("extract_features: image is " + std::to_string(img.width()) + "x" +
                                        std::to_string(img.height()) + ", extractor expects " +
                                        std::to_string(width_) + "x" + std::to_string(height_));
        }
        if (out.size() != output_dim()) {
            throw std::invalid_argument("extract_features: output span has wrong length");
        }
        if (kind_ == FeatureKind::RawPixels) {
            const auto& p = img.pixels();
            for (std::size_t i = 0; i < p.size(); ++i) {
                out[i] = static_cast<double>(p[i]) / 255.0;
            }
            return;
        }
        hog(img, out);
    }

    std::vector<double> extract(const Image& img) const
    {
        std::vector<double> out(output_dim());
        extract(img, out);
        return out;
    }

private:
    void hog(const Image& img, std::span<double> out) const
    {
        const std::size_t w = width_;
        const std::size_t h = height_;
        std::vector<double> lum(w * h);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                lum[y * w + x] = kernels::luminance(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
            }
        }
        const std::size_t ncx = w / kHogCell;
        const std::size_t ncy = h / kHogCell;
        std::vector<double> cells(ncx * ncy * kHogBins, 0.0);
        const double bin_width = std::numbers::pi / static_cast<double>(kHogBins);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double gx = lum[y * w + std::min(x + 1, w - 1)] - lum[y * w + (x > 0 ? x - 1 : 0)];
                const double gy = lum[std::min(y + 1, h - 1) * w + x] - lum[(y > 0 ? y - 1 : 0) * w + x];
                const double mag = std::hypot(gx, gy);
                if (mag == 0.0) {
                    continue;
                }
                double angle = std::atan2(gy, gx);
                if (angle < 0.0) {
                    angle += std::numbers::pi;
                }
                // bin centres at (b + 0.5) * bin_width; vote linearly into the two nearest
                const double pos = angle / bin_width - 0.5;
                const double lo = std::floor(pos);
                const double frac = pos - lo;
                const auto b0 = static_cast<std::size_t>((static_cast<long long>(lo) + kHogBins) % kHogBins);
                const std::size_t b1 = (b0 + 1) % kHogBins;
                double* cell = &cells[((y / kHogCell) * ncx + x / kHogCell) * kHogBins];
                cell[b0] += mag * (1.0 - frac);
                cell[b1] += mag * frac;
            }
        }
        std::size_t o = 0;
        for (std::size_t by = 0; by + kHogBlock <= ncy; ++by) {
            for (std::size_t bx = 0; bx + kHogBlock <= ncx; ++bx) {
                const std::size_t start = o;
                double norm2 = 0.0;
                for (std::size_t dy = 0; dy < kHogBlock; ++dy) {
                    for (std::size_t dx = 0; dx < kHogBlock; ++dx) {
                        const double* cell = &cells[((by + dy) * ncx + bx + dx) * kHogBins];
                        for (std::size_t b = 0; b < kHogBins; ++b) {
                            out[o++] = cell[b];
                            norm2 += cell[b] * cell[b];
                        }
                    }
                }
                const double inv = 1.0 / std::sqrt(norm2 + kHogEpsilon * kHogEpsilon);
                for (std::size_t i = start; i < o; ++i) {
                    out[i] *= inv;
                }
            }
        }
    }

    FeatureKind kind_;
    std::size_t width_;
    std::size_t height_;
};

inline std::vector<double> extract_features(const Image& img, const FeatureExtractor& fe) { return fe.extract(img); }

/// Affine scores followed by softmax. weights(d, c) is stored at d * num_classes + c.
struct LinearHead {
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    static LinearHead zeros(std::size_t input_dim, std::size_t num_classes)
    {
        return {input_dim, num_classes, std::vector<double>(input_dim * num_classes, 0.0),
                std::vector<double>(num_classes, 0.0)};
    }

    double& w(std::size_t d, std::size_t c) { return weights[d * num_classes + c]; }
    double w(std::size_t d, std::size_t c) const { return weights[d * num_classes + c]; }

    bool finite() const
    {
        return std::all_of(weights.begin(), weights.end(), [](double v) { return std::isfinite(v); }) &&
               std::all_of(bias.begin(), bias.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

struct TrainConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 256;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0001;
    Seed shuffle_seed = 0;

    void validate() const
    {
        if (epochs < 1) {
            throw std::invalid_argument("TrainConfig: epochs must be at least 1");
        }
        if (batch_size < 1) {
            throw std::invalid_argument("TrainConfig: batch_size must be at least 1");
        }
        if (!(learning_rate >= 0.0) || !(momentum >= 0.0 && momentum < 1.0) || !(weight_decay >= 0.0)) {
            throw std::invalid_argument("TrainConfig: learning_rate, momentum and weight_decay out of range");
        }
    }
};

inline std::vector<double> scores(std::span<const double> features, const LinearHead& head)
{
    if (features.size() != head.input_dim) {
        throw std::invalid_argument("predict: feature length " + std::to_string(features.size()) +
                                    " does not match head input " + std::to_string(head.input_dim));
    }
    std::vector<double> s(head.bias);
    const double* wp = head.weights.data();
    for (std::size_t d = 0; d < head.input_dim; ++d) {
        const double x = features[d];
        if (x != 0.0) {
            for (std::size_t c = 0; c < head.num_classes; ++c) {
                s[c] += x * wp[c];
            }
        }
        wp += head.num_classes;
    }
    return s;
}

/// Max-shifted softmax; safe for very large scores.
inline std::vector<double> softmax(std::span<const double> s)
{
    const double m = *std::max_element(s.begin(), s.end());
    std::vector<double> p(s.size());
    double z = 0.0;
    for (std::size_t c = 0; c < s.size(); ++c) {
        p[c] = std::exp(s[c] - m);
        z += p[c];
    }
    for (auto& v : p) {
        v /= z;
    }
    return p;
}

inline std::vector<double> predict(std::span<const double> features, const LinearHead& head)
{
    return softmax(scores(features, head));
}

/// argmax, lowest index on ties.
inline std::size_t predicted_label(std::span<const double> distribution)
{
    return static_cast<std::size_t>(std::max_element(distribution.begin(), distribution.end()) - distribution.begin());
}

struct LossGrad {
    double loss = 0.0;          // mean cross-entropy over the batch
    std::vector<double> dw;     // same layout as LinearHead::weights
    std::vector<double> db;
};

/// Mean categorical cross-entropy of a batch and its analytic gradient.
inline LossGrad batch_loss_grad(const LinearHead& head, std::span<const std::vector<double>> xs,
                                std::span<const std::size_t> ys)
{
    if (xs.size() != ys.size() || xs.empty()) {
        throw std::invalid_argument("batch_loss_grad: empty or mismatched batch");
    }
    LossGrad g{0.0, std::vector<double>(head.weights.size(), 0.0), std::vector<double>(head.num_classes, 0.0)};
    const double inv_n = 1.0 / static_cast<double>(xs.size());
    std::vector<double> err(head.num_classes);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto s = scores(xs[i], head);
        const double m = *std::max_element(s.begin(), s.end());
        double z = 0.0;
        for (double v : s) {
            z += std::exp(v - m);
        }
        const double log_z = m + std::log(z);
        g.loss += (log_z - s[ys[i]]) * inv_n;
        for (std::size_t c = 0; c < head.num_classes; ++c) {
            err[c] = (std::exp(s[c] - log_z) - (c == ys[i] ? 1.0 : 0.0)) * inv_n;
            g.db[c] += err[c];
        }
        double* dwp = g.dw.data();
        for (std::size_t d = 0; d < head.input_dim; ++d) {
            const double x = xs[i][d];
            if (x != 0.0) {
                for (std::size_t c = 0; c < head.num_classes; ++c) {
                    dwp[c] += x * err[c];
                }
            }
            dwp += head.num_classes;
        }
    }
    return g;
}

/// One optimizer step: classical momentum on the gradient plus decoupled
/// weight decay on the weights (not the bias).
struct MomentumSgd {
    std::vector<double> vw;
    std::vector<double> vb;

    void step(LinearHead& head, const LossGrad& g, const TrainConfig& cfg)
    {
        if (vw.empty()) {
            vw.assign(head.weights.size(), 0.0);
            vb.assign(head.bias.size(), 0.0);
        }
        const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
        for (std::size_t i = 0; i < head.weights.size(); ++i) {
            vw[i] = cfg.momentum * vw[i] + g.dw[i];
            head.weights[i] = head.weights[i] * decay - cfg.learning_rate * vw[i];
        }
        for (std::size_t c = 0; c < head.bias.size(); ++c) {
            vb[c] = cfg.momentum * vb[c] + g.db[c];
            head.bias[c] -= cfg.learning_rate * vb[c];
        }
    }
};

struct TrainResult {
    LinearHead head;
    std::vector<double> epoch_loss; // mean training loss of each epoch, measured before each batch update
};

/// Fine-tunes `init` on the given samples. Every epoch each sample is freshly
/// augmented with `policy` (its class row, in `order`) before feature
/// extraction; the sample order is reshuffled per epoch. Deterministic in
/// (cfg.shuffle_seed, seed).
inline TrainResult train_head(const LabeledImageDataset& ds, std::span<const std::size_t> samples,
                              const PolicyMatrix& policy, const CategoryOrder& order, const FeatureExtractor& fe,
                              const TrainConfig& cfg, const LinearHead& init, Seed seed)
{
    cfg.validate();
    if (samples.empty()) {
        throw std::invalid_argument("train_head: no training samples");
    }
    std::vector<std::size_t> per_class(ds.num_classes(), 0);
    for (auto i : samples) {
        ++per_class.at(ds.labels.at(i));
    }
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        if (per_class[c] == 0) {
            throw std::invalid_argument("train_head: class '" + ds.class_names[c] + "' has no training samples");
        }
    }
    if (policy.num_classes() != ds.num_classes()) {
        throw std::invalid_argument("train_head: policy has " + std::to_string(policy.num_classes()) +
                                    " classes, dataset has " + std::to_string(ds.num_classes()));
    }
    if (init.input_dim != fe.output_dim() || init.num_classes != ds.num_classes()) {
        throw std::invalid_argument("train_head: initial head has the wrong shape");
    }

    // a class whose policy row is all zero never changes; reuse its clean features
    std::vector<bool> row_active(ds.num_classes(), false);
    for (std::size_t c = 0; c < ds.num_classes(); ++c) {
        const auto row = policy.row(c);
        row_active[c] = std::any_of(row.begin(), row.end(), [](double p) { return p > 0.0; });
    }
    std::vector<std::vector<double>> clean(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k) {
        clean[k] = fe.extract(ds.images[samples[k]]);
    }

    TrainResult result{init, {}};
    MomentumSgd opt;
    std::vector<std::size_t> perm(samples.size());
    std::vector<std::vector<double>> batch_x;
    std::vector<std::size_t> batch_y;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        auto shuffle_rng = make_rng(mix_seed({cfg.shuffle_seed, seed, epoch}));
        for (std::size_t i = perm.size(); i > 1; --i) {
            std::swap(perm[i - 1], perm[uniform_int(shuffle_rng, 0, i - 1)]);
        }
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(perm.size(), start + cfg.batch_size);
            batch_x.clear();
            batch_y.clear();
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t k = perm[b];
                const std::size_t idx = samples[k];
                const std::size_t label = ds.labels[idx];
                if (row_active[label]) {
                    Image img = ds.images[idx];
                    auto rng = make_rng(mix_seed({seed, epoch, idx}));
                    if (apply_policy_inplace(img, label, policy, order, rng) > 0) {
                        batch_x.push_back(fe.extract(img));
                        batch_y.push_back(label);
                        continue;
                    }
                }
                batch_x.push_back(clean[k]);
                batch_y.push_back(label);
            }
            const auto g = batch_loss_grad(result.head, batch_x, batch_y);
            if (!std::isfinite(g.loss)) {
                throw EvaluationFailure("train_head: non-finite loss in epoch " + std::to_string(epoch));
            }
            epoch_loss += g.loss * static_cast<double>(end - start);
            opt.step(result.head, g, cfg);
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(perm.size()));
    }
    if (!result.head.finite()) {
        throw EvaluationFailure("train_head: head diverged to non-finite weights");
    }
    return result;
}

/// Trains on the dataset's train split.
inline LinearHead train_head(const LabeledImageDataset& ds, const PolicyMatrix& policy, const CategoryOrder& order,
                             const FeatureExtractor& fe, const TrainConfig& cfg, const LinearHead& init, Seed seed)
{
    const auto train = ds.indices(Split::Train);
    return train_head(ds, train, policy, order, fe, cfg, init, seed).head;
}

/// Confusion matrix of `head` on the given samples, without any augmentation.
inline ConfusionMatrix evaluate(const LinearHead& head, const LabeledImageDataset& ds,
                                std::span<const std::size_t> samples, const FeatureExtractor& fe)
{
    ConfusionMatrix cm(ds.class_names);
    std::vector<double> x(fe.output_dim());
    for (auto i : samples) {
        fe.extract(ds.images[i], x);
        cm.add(ds.labels[i], predicted_label(scores(x, head)));
    }
    return cm;
}

inline ConfusionMatrix evaluate(const LinearHead& head, const LabeledImageDataset& ds, Split split,
                                const FeatureExtractor& fe)
{
    const auto idx = ds.indices(split);
    return evaluate(head, ds, idx, fe);
}

/// Fitness of a policy: fine-tune the baseline head on the augmented train
/// split, then mean-per-class accuracy on the untouched validation split.
inline double fitness_of_policy(const PolicyMatrix& policy, const CategoryOrder& order, const LabeledImageDataset& ds,
                                const FeatureExtractor& fe, const TrainConfig& cfg, const LinearHead& baseline,
                                Seed seed)
{
    const auto head = train_head(ds, policy, order, fe, cfg, baseline, seed);
    return mpca(evaluate(head, ds, Split::Val, fe));
}

/// The warm start for every fitness evaluation: a head trained from zero on
/// the un-augmented train split.
inline LinearHead train_baseline(const LabeledImageDataset& ds, const FeatureExtractor& fe, const TrainConfig& cfg,
                                 Seed seed)
{
    const auto zero = PolicyMatrix::zeros(ds.num_classes(), kNumAugmentations, 0.1);
    return train_head(ds, zero, CategoryOrder{}, fe, cfg, LinearHead::zeros(fe.output_dim(), ds.num_classes()),
                      seed);
}

} // namespace polysearch
