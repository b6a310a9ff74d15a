#include "catch_amalgamated.hpp"

#include <cmath>

#include "polysearch/classifier.hpp"

using namespace polysearch;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Two linearly separable blobs of 4x4 images: dark versus bright, with noise.
LabeledImageDataset blobs(std::size_t per_class, Seed seed)
{
    LabeledImageDataset ds;
    ds.class_names = {"dark", "bright"};
    auto rng = make_rng(seed);
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t k = 0; k < per_class; ++k) {
            Image img(4, 4);
            for (auto& v : img.pixels()) {
                const double mean = c == 0 ? 80.0 : 170.0;
                v = static_cast<std::uint8_t>(std::clamp(mean + 25.0 * normal01(rng), 0.0, 255.0));
            }
            ds.images.push_back(std::move(img));
            ds.labels.push_back(c);
            ds.tags.push_back(k % 5 == 0 ? Split::Val : Split::Train);
        }
    }
    return ds;
}

double accuracy_on(const LinearHead& head, const LabeledImageDataset& ds, Split split, const FeatureExtractor& fe)
{
    return overall_accuracy(evaluate(head, ds, split, fe));
}

} // namespace

TEST_CASE("raw pixel features are scaled bytes", "[classifier]")
{
    Image img(2, 2, std::vector<std::uint8_t>{0, 255, 51, 102, 0, 0, 1, 2, 3, 4, 5, 255});
    const FeatureExtractor fe(FeatureKind::RawPixels, 2, 2);
    REQUIRE(fe.output_dim() == 12);
    const auto x = fe.extract(img);
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(x[i] == static_cast<double>(img.pixels()[i]) / 255.0);
    }
    CHECK_THROWS_AS(fe.extract(Image(3, 2)), std::invalid_argument);
}

TEST_CASE("HOG layout and flat images", "[classifier]")
{
    const FeatureExtractor fe(FeatureKind::HOG, 64, 64);
    CHECK(fe.output_dim() == 7 * 7 * 4 * 9);
    const auto x = fe.extract(Image(64, 64, 93));
    CHECK(std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; }));
    CHECK_THROWS_AS(FeatureExtractor(FeatureKind::HOG, 20, 64), std::invalid_argument);
    CHECK_THROWS_AS(FeatureExtractor(FeatureKind::HOG, 8, 8), std::invalid_argument);

    Image edge(16, 16, 0);
    for (std::size_t y = 0; y < 16; ++y) {
        for (std::size_t x = 8; x < 16; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                edge.at(x, y, c) = 200;
            }
        }
    }
    const auto h = FeatureExtractor(FeatureKind::HOG, 16, 16).extract(edge);
    double norm = 0.0;
    for (double v : h) {
        CHECK(v >= 0.0);
        norm += v * v;
    }
    CHECK_THAT(norm, WithinAbs(1.0, 1e-6)); // one block, L2-normalised
}

TEST_CASE("softmax", "[classifier]")
{
    const std::vector<double> s{10.0, 0.0};
    CHECK_THAT(softmax(s)[0], WithinAbs(0.9999546, 1e-7));

    auto rng = make_rng(4);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> v(5);
        for (auto& x : v) {
            x = 50.0 * normal01(rng);
        }
        const auto p = softmax(v);
        double sum = 0.0;
        for (double q : p) {
            sum += q;
        }
        REQUIRE_THAT(sum, WithinAbs(1.0, 1e-12));
    }
    const auto extreme = softmax(std::vector<double>{1e4, -1e4, 0.0});
    CHECK(extreme[0] == 1.0);
    CHECK(extreme[1] == 0.0);
    CHECK(std::all_of(extreme.begin(), extreme.end(), [](double q) { return std::isfinite(q); }));
}

TEST_CASE("a zero head predicts the uniform distribution", "[classifier]")
{
    const auto head = LinearHead::zeros(6, 4);
    const auto p = predict(std::vector<double>{1, 2, 3, 4, 5, 6}, head);
    for (double q : p) {
        CHECK(q == 0.25);
    }
    CHECK(predicted_label(p) == 0);
    CHECK_THROWS_AS(scores(std::vector<double>(5), head), std::invalid_argument);
}

TEST_CASE("analytic gradient matches central differences", "[classifier]")
{
    for (Seed s = 0; s < 20; ++s) {
        auto rng = make_rng(mix_seed({s, 0x67ad}));
        const std::size_t d = 2 + uniform_int(rng, 0, 6);
        const std::size_t c = 2 + uniform_int(rng, 0, 3);
        const std::size_t n = 1 + uniform_int(rng, 0, 7);
        auto head = LinearHead::zeros(d, c);
        for (auto& w : head.weights) {
            w = normal01(rng);
        }
        for (auto& b : head.bias) {
            b = normal01(rng);
        }
        std::vector<std::vector<double>> xs(n, std::vector<double>(d));
        std::vector<std::size_t> ys(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (auto& x : xs[i]) {
                x = normal01(rng);
            }
            ys[i] = uniform_int(rng, 0, c - 1);
        }
        const auto g = batch_loss_grad(head, xs, ys);
        const double h = 1e-5;
        auto check = [&](double& param, double analytic) {
            const double keep = param;
            param = keep + h;
            const double up = batch_loss_grad(head, xs, ys).loss;
            param = keep - h;
            const double down = batch_loss_grad(head, xs, ys).loss;
            param = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            REQUIRE(rel <= 1e-4);
        };
        for (std::size_t i = 0; i < head.weights.size(); ++i) {
            check(head.weights[i], g.dw[i]);
        }
        for (std::size_t k = 0; k < c; ++k) {
            check(head.bias[k], g.db[k]);
        }
    }
}

TEST_CASE("plain SGD step when momentum and decay are zero", "[classifier]")
{
    auto rng = make_rng(9);
    auto head = LinearHead::zeros(3, 2);
    for (auto& w : head.weights) {
        w = normal01(rng);
    }
    const std::vector<std::vector<double>> xs{{1.0, 0.5, -0.5}, {0.2, 0.1, 0.3}};
    const std::vector<std::size_t> ys{0, 1};
    TrainConfig cfg;
    cfg.learning_rate = 0.3;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    MomentumSgd opt;
    for (int step = 0; step < 3; ++step) {
        const auto g = batch_loss_grad(head, xs, ys);
        auto expected = head;
        for (std::size_t i = 0; i < head.weights.size(); ++i) {
            expected.weights[i] -= 0.3 * g.dw[i];
        }
        for (std::size_t k = 0; k < 2; ++k) {
            expected.bias[k] -= 0.3 * g.db[k];
        }
        opt.step(head, g, cfg);
        REQUIRE(head == expected);
    }
}

TEST_CASE("training with a zero learning rate leaves the head unchanged", "[classifier]")
{
    const auto ds = blobs(20, 1);
    const FeatureExtractor fe(FeatureKind::RawPixels, 4, 4);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.batch_size = 8;
    auto init = LinearHead::zeros(fe.output_dim(), 2);
    init.weights[3] = 0.25;
    const auto zero = PolicyMatrix::zeros(2, kNumAugmentations, 0.1);
    CHECK(train_head(ds, zero, CategoryOrder{}, fe, cfg, init, 5) == init);
}

TEST_CASE("training separates linearly separable data", "[classifier]")
{
    const auto ds = blobs(60, 2);
    const FeatureExtractor fe(FeatureKind::RawPixels, 4, 4);
    const auto train = ds.indices(Split::Train);

    // a perceptron confirms the training set is separable
    std::vector<double> w(fe.output_dim() + 1, 0.0);
    bool separated = false;
    for (int pass = 0; pass < 1000 && !separated; ++pass) {
        separated = true;
        for (auto i : train) {
            const auto x = fe.extract(ds.images[i]);
            double a = w.back();
            for (std::size_t k = 0; k < x.size(); ++k) {
                a += w[k] * x[k];
            }
            const double y = ds.labels[i] == 1 ? 1.0 : -1.0;
            if (y * a <= 0.0) {
                separated = false;
                for (std::size_t k = 0; k < x.size(); ++k) {
                    w[k] += y * x[k];
                }
                w.back() += y;
            }
        }
    }
    REQUIRE(separated);

    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.5;
    const auto head = train_baseline(ds, fe, cfg, 3);
    CHECK(accuracy_on(head, ds, Split::Train, fe) == 1.0);
}

TEST_CASE("epoch loss decreases", "[classifier]")
{
    const auto ds = blobs(40, 3);
    const FeatureExtractor fe(FeatureKind::RawPixels, 4, 4);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.05;
    const auto train = ds.indices(Split::Train);
    const auto r = train_head(ds, train, PolicyMatrix::zeros(2, kNumAugmentations, 0.1), CategoryOrder{}, fe, cfg,
                              LinearHead::zeros(fe.output_dim(), 2), 1);
    REQUIRE(r.epoch_loss.size() == 10);
    CHECK_THAT(r.epoch_loss.front(), WithinRel(std::log(2.0), 0.2));
    CHECK(r.epoch_loss.back() < 0.5 * r.epoch_loss.front());
}

TEST_CASE("evaluation never augments", "[classifier]")
{
    const auto ds = blobs(20, 4);
    const FeatureExtractor fe(FeatureKind::RawPixels, 4, 4);
    const auto before = transform_counter().load();
    (void)evaluate(LinearHead::zeros(fe.output_dim(), 2), ds, Split::Val, fe);
    CHECK(transform_counter().load() == before);
}

TEST_CASE("fitness is deterministic in the seed", "[classifier]")
{
    const auto ds = blobs(30, 5);
    const FeatureExtractor fe(FeatureKind::RawPixels, 4, 4);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    const auto base = train_baseline(ds, fe, cfg, 0);
    const auto policy = random_policy(2, kNumAugmentations, 0.1, 8);
    const double a = fitness_of_policy(policy, CategoryOrder{}, ds, fe, cfg, base, 42);
    const double b = fitness_of_policy(policy, CategoryOrder{}, ds, fe, cfg, base, 42);
    CHECK(a == b);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
}

TEST_CASE("divergence is reported as an evaluation failure", "[classifier]")
{
    const auto ds = blobs(10, 6);
    const FeatureExtractor fe(FeatureKind::RawPixels, 4, 4);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 4;
    cfg.learning_rate = 1e300;
    cfg.momentum = 0.0;
    CHECK_THROWS_AS(train_baseline(ds, fe, cfg, 0), EvaluationFailure);
}

TEST_CASE("training argument checks", "[classifier]")
{
    auto ds = blobs(5, 7);
    const FeatureExtractor fe(FeatureKind::RawPixels, 4, 4);
    TrainConfig cfg;
    const auto zero = PolicyMatrix::zeros(2, kNumAugmentations, 0.1);
    CHECK_THROWS_AS(train_head(ds, PolicyMatrix::zeros(3, kNumAugmentations, 0.1), CategoryOrder{}, fe, cfg,
                               LinearHead::zeros(fe.output_dim(), 2), 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(train_head(ds, zero, CategoryOrder{}, fe, cfg, LinearHead::zeros(7, 2), 0),
                    std::invalid_argument);
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
