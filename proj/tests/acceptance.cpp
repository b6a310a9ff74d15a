// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance [config.json] [output_dir]
//
// The end-to-end criteria (6 and 7) share three searches on the synthetic
// confounder corpus described by the config file.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "polysearch/orchestrator.hpp"

using namespace polysearch;

namespace {

struct Verdict {
    bool pass;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* f, double a)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

Image random_image(Rng& rng)
{
    Image img(1 + uniform_int(rng, 0, 40), 1 + uniform_int(rng, 0, 40));
    const auto lo = uniform_int(rng, 0, 200);
    const auto hi = lo + uniform_int(rng, 0, 255 - lo);
    for (auto& v : img.pixels()) {
        v = static_cast<std::uint8_t>(uniform_int(rng, lo, hi));
    }
    return img;
}

Verdict transform_exactness()
{
    const auto t0 = Clock::now();
    auto rng = make_rng(101);
    std::size_t checks = 0;
    std::size_t failures = 0;
    auto expect = [&](bool ok) {
        ++checks;
        failures += !ok;
    };
    const auto zero = PolicyMatrix::zeros(2, kNumAugmentations, 0.1);
    for (int t = 0; t < 500; ++t) {
        const Image img = random_image(rng);
        expect(kernels::invert(kernels::invert(img)) == img);
        for (int bits = 0; bits <= 8; ++bits) {
            const auto p = kernels::posterize(img, bits);
            const auto mask = static_cast<std::uint8_t>(0xFF << (8 - bits));
            bool masked = true;
            for (std::size_t i = 0; i < img.pixels().size(); ++i) {
                masked = masked && p.pixels()[i] == (img.pixels()[i] & mask);
            }
            expect(masked);
            expect(kernels::posterize(p, bits) == p);
        }
        expect(kernels::posterize(img, 8) == img);
        for (int thr : {0, 1, 64, 128, 200, 255, 256}) {
            const auto s = kernels::solarize(img, thr);
            bool arith = true;
            for (std::size_t i = 0; i < img.pixels().size(); ++i) {
                const int v = img.pixels()[i];
                arith = arith && s.pixels()[i] == (v >= thr ? 255 - v : v);
            }
            expect(arith);
        }
        expect(kernels::solarize(img, 256) == img);
        const auto eq = kernels::equalize(img);
        expect(kernels::equalize(eq) == eq);
        const auto ac = kernels::auto_contrast(img);
        expect(kernels::auto_contrast(ac) == ac);
        for (const auto& order : CategoryOrder::all()) {
            auto r = make_rng(static_cast<Seed>(t));
            expect(apply_policy(img, t % 2, zero, order, r) == img);
        }
    }
    const double secs = seconds_since(t0);
    return {failures == 0 && secs < 10.0,
            std::to_string(checks - failures) + "/" + std::to_string(checks) + " exact checks in " +
                fmt("%.2f s", secs)};
}

Verdict ga_invariants()
{
    const auto t0 = Clock::now();
    std::size_t bad_elitism = 0, bad_determinism = 0, bad_cache = 0, bad_crossover = 0;
    const std::size_t seeds = 100;
    for (Seed s = 0; s < seeds; ++s) {
        GAConfig cfg;
        cfg.population_size = 12;
        cfg.num_parents_kept = 6;
        cfg.elite_count = 2;
        cfg.max_generations = 15;
        cfg.stagnation_limit = 15;
        cfg.master_seed = s;
        const GenomeSpec spec{6, GeneGrid(0.25)};

        std::mutex mu;
        std::vector<Genome> evaluated;
        auto fitness = [&](std::span<const double> g, Seed eval_seed) {
            {
                std::lock_guard lock(mu);
                evaluated.emplace_back(g.begin(), g.end());
            }
            // a seed-dependent term keeps determinism meaningful
            double f = -std::abs(std::accumulate(g.begin(), g.end(), 0.0) - 2.0);
            return f + 1e-3 * static_cast<double>(eval_seed % 7);
        };
        EvolveOptions one;
        one.log = nullptr;
        EvolveOptions many = one;
        many.workers = 3;

        const auto a = evolve(cfg, spec, fitness, one);
        const std::set<Genome> unique(evaluated.begin(), evaluated.end());
        if (unique.size() != evaluated.size() || a.total_evaluations != evaluated.size()) {
            ++bad_cache;
        }
        for (std::size_t g = 1; g < a.history.size(); ++g) {
            if (a.history[g].best_fitness < a.history[g - 1].best_fitness) {
                ++bad_elitism;
                break;
            }
        }
        const auto b = evolve(cfg, spec, fitness, many);
        bool same = a.history.size() == b.history.size() && a.best_individual.genome == b.best_individual.genome;
        for (std::size_t g = 0; same && g < a.history.size(); ++g) {
            same = a.history[g].best_fitness == b.history[g].best_fitness &&
                   a.history[g].mean_fitness == b.history[g].mean_fitness &&
                   a.history[g].evaluations == b.history[g].evaluations;
        }
        bad_determinism += !same;

        auto rng = make_rng(mix_seed({s, 0xc0}));
        const std::size_t len = 2 + uniform_int(rng, 0, 30);
        Genome p1(len), p2(len);
        for (std::size_t i = 0; i < len; ++i) {
            p1[i] = static_cast<double>(i);
            p2[i] = -static_cast<double>(i) - 1.0;
        }
        const auto [c1, c2] = single_point_crossover(p1, p2, rng);
        std::size_t cut = 0;
        while (cut < len && c1[cut] == p1[cut]) {
            ++cut;
        }
        bool exchange = cut >= 1 && cut <= len - 1;
        for (std::size_t i = 0; i < len; ++i) {
            exchange = exchange && (i < cut ? c1[i] == p1[i] && c2[i] == p2[i] : c1[i] == p2[i] && c2[i] == p1[i]);
        }
        bad_crossover += !exchange;
    }
    const double secs = seconds_since(t0);
    std::ostringstream os;
    os << seeds << " seeds, violations: elitism " << bad_elitism << ", determinism " << bad_determinism
       << ", cache " << bad_cache << ", crossover " << bad_crossover << "; " << fmt("%.1f s", secs);
    return {bad_elitism + bad_determinism + bad_cache + bad_crossover == 0 && secs < 60.0, os.str()};
}

Verdict rastrigin_check()
{
    const auto t0 = Clock::now();
    std::vector<double> initial, final5;
    std::size_t dim1_ok = 0;
    for (Seed s = 0; s < 10; ++s) {
        GAConfig cfg;
        cfg.population_size = 100;
        cfg.max_generations = 100;
        cfg.master_seed = s;
        const auto r5 = cmd_rastrigin_check(5, cfg);
        initial.push_back(r5.initial_best);
        final5.push_back(r5.final_best);
        dim1_ok += cmd_rastrigin_check(1, cfg).final_best < 1.0;
    }
    const double secs = seconds_since(t0);
    const double mi = median(initial);
    const double mf = median(final5);
    std::ostringstream os;
    os << "dims 5: median initial " << fmt("%.3f", mi) << ", median final " << fmt("%.3f", mf) << "; dims 1: "
       << dim1_ok << "/10 below 1.0; " << fmt("%.1f s", secs);
    return {mf <= 0.5 * mi && dim1_ok >= 9 && secs < 120.0, os.str()};
}

Verdict metrics_oracle()
{
    std::size_t mismatches = 0;
    for (Seed s = 0; s < 1000; ++s) {
        auto rng = make_rng(mix_seed({s, 0x4d}));
        const std::size_t c = 2 + uniform_int(rng, 0, 8);
        std::vector<std::vector<std::uint64_t>> rows(c, std::vector<std::uint64_t>(c));
        for (auto& r : rows) {
            for (auto& v : r) {
                v = uniform_int(rng, 0, 50);
            }
        }
        for (std::size_t i = 0; i < c; ++i) {
            rows[i][uniform_int(rng, 0, c - 1)] += 1;
        }
        const auto cm = ConfusionMatrix::from_rows(rows);

        double total = 0, diag = 0, recall = 0, spec = 0;
        std::vector<double> per(c);
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                total += static_cast<double>(rows[i][j]);
            }
            diag += static_cast<double>(rows[i][i]);
        }
        for (std::size_t k = 0; k < c; ++k) {
            double pos = 0, tp = static_cast<double>(rows[k][k]), neg = 0, tn = 0;
            for (std::size_t i = 0; i < c; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    const auto v = static_cast<double>(rows[i][j]);
                    if (i == k) {
                        pos += v;
                    } else {
                        neg += v;
                        tn += j != k ? v : 0.0;
                    }
                }
            }
            per[k] = tp / pos;
            recall += per[k];
            spec += tn / neg;
        }
        recall /= static_cast<double>(c);
        spec /= static_cast<double>(c);
        auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
        const auto pc = per_class_accuracy(cm);
        const auto ss = sensitivity_specificity(cm);
        bool ok = close(mpca(cm), recall) && close(overall_accuracy(cm), diag / total) &&
                  close(ss.sensitivity, recall) && close(ss.specificity, spec);
        for (std::size_t k = 0; k < c; ++k) {
            ok = ok && close(pc[k], per[k]);
        }
        mismatches += !ok;
    }
    const double worked = mpca(ConfusionMatrix::from_rows({{8, 2}, {4, 6}}));
    return {mismatches == 0 && worked == 0.7, std::to_string(1000 - mismatches) +
                                                  "/1000 matrices match, [[8,2],[4,6]] -> " + fmt("%.17g", worked)};
}

Verdict gradient_check()
{
    double worst = 0.0;
    for (Seed s = 0; s < 20; ++s) {
        auto rng = make_rng(mix_seed({s, 0x9c}));
        const std::size_t d = 2 + uniform_int(rng, 0, 8);
        const std::size_t c = 2 + uniform_int(rng, 0, 4);
        const std::size_t n = 1 + uniform_int(rng, 0, 9);
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
        auto probe = [&](double& param, double analytic) {
            const double keep = param;
            param = keep + h;
            const double up = batch_loss_grad(head, xs, ys).loss;
            param = keep - h;
            const double down = batch_loss_grad(head, xs, ys).loss;
            param = keep;
            const double numeric = (up - down) / (2.0 * h);
            worst = std::max(worst, std::abs(numeric - analytic) /
                                        std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
        };
        for (std::size_t i = 0; i < head.weights.size(); ++i) {
            probe(head.weights[i], g.dw[i]);
        }
        for (std::size_t k = 0; k < c; ++k) {
            probe(head.bias[k], g.db[k]);
        }
    }
    return {worst <= 1e-4, "20 instances, worst relative error " + fmt("%.2e", worst)};
}

struct EndToEnd {
    std::vector<double> gains_pp;
    std::vector<double> minutes;
    std::vector<bool> color_lower;
    std::vector<std::string> analyses;
};

std::size_t first_class(const SynthConfig& sc, ClassRecipe r)
{
    return static_cast<std::size_t>(std::find(sc.recipes.begin(), sc.recipes.end(), r) - sc.recipes.begin());
}

EndToEnd run_end_to_end(const RunConfig& base, const fs::path& out_root)
{
    EndToEnd e;
    const auto hue = first_class(base.data.synth, ClassRecipe::Hue);
    const auto shape = first_class(base.data.synth, ClassRecipe::Shape);
    for (Seed seed : {1, 2, 3}) {
        RunConfig cfg = base;
        cfg.ga.master_seed = seed;
        cfg.workers = 8;
        cfg.output_dir = out_root / ("seed" + std::to_string(seed));
        cfg.log = nullptr;
        const auto t0 = Clock::now();
        const auto o = cmd_search(cfg);
        e.minutes.push_back(seconds_since(t0) / 60.0);
        e.gains_pp.push_back(100.0 * (o.optimized_test.mpca - o.baseline_test.mpca));

        const auto analysis = cmd_analyze_policy(load_policy(o.artifacts.policy), cfg.output_dir);
        e.color_lower.push_back(analysis.classes[hue].means.color < analysis.classes[shape].means.color);
        std::ostringstream os;
        os << "  seed " << seed << ": test MPCA " << fmt("%.4f", o.baseline_test.mpca) << " -> "
           << fmt("%.4f", o.optimized_test.mpca) << " (" << fmt("%+.1f pp", e.gains_pp.back()) << "), "
           << o.search.history.size() << " generations, " << fmt("%.1f min", e.minutes.back())
           << (o.fell_back_to_baseline ? ", kept baseline head" : "") << "\n";
        os << "  color mean " << analysis.classes[hue].class_name << " "
           << fmt("%.3f", analysis.classes[hue].means.color) << " vs " << analysis.classes[shape].class_name << " "
           << fmt("%.3f", analysis.classes[shape].means.color) << " (" << (cfg.output_dir / "policy_summary.txt").string()
           << ")";
        e.analyses.push_back(os.str());
    }
    return e;
}

Verdict order_experiment(const RunConfig& base, const fs::path& out_dir)
{
    RunConfig cfg = base;
    cfg.ga.population_size = 10;
    cfg.ga.num_parents_kept = 5;
    cfg.ga.max_generations = 5;
    cfg.workers = 8;
    cfg.output_dir = out_dir;
    cfg.log = nullptr;
    const auto rows = cmd_order_experiment(cfg);
    std::set<std::string> orders;
    std::ostringstream os;
    for (const auto& r : rows) {
        orders.insert(r.order);
        os << "\n  " << r.order << ": MPCA " << fmt("%.4f", r.mpca) << ", overall " << fmt("%.4f", r.overall_accuracy);
    }
    bool csv_ok = false;
    {
        std::ifstream in(out_dir / "order_experiment.csv");
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
        }
        csv_ok = n == 7;
    }
    return {rows.size() == 6 && orders.size() == 6 && csv_ok,
            std::to_string(rows.size()) + " rows, " + std::to_string(orders.size()) + " distinct orders" + os.str()};
}

Verdict split_arithmetic()
{
    LabeledImageDataset ds;
    for (std::size_t c = 0; c < 4; ++c) {
        ds.class_names.push_back("c" + std::to_string(c));
        for (std::size_t k = 0; k < 100; ++k) {
            ds.images.emplace_back(1, 1);
            ds.labels.push_back(c);
        }
    }
    const auto split = stratified_split(std::move(ds), {0.80, 0.09, 0.11}, 5);
    bool ok = true;
    for (std::size_t c = 0; c < 4; ++c) {
        std::array<std::size_t, 3> n{};
        for (std::size_t i = 0; i < split.size(); ++i) {
            if (split.labels[i] == c) {
                ++n[static_cast<std::size_t>(split.tags[i])];
            }
        }
        ok = ok && n == std::array<std::size_t, 3>{80, 9, 11};
    }
    return {ok, ok ? "80/9/11 in every class" : "wrong per-class counts"};
}

} // namespace

int main(int argc, char** argv)
{
    const fs::path config = argc > 1 ? fs::path(argv[1]) : fs::path(POLYSEARCH_DEFAULT_CONFIG);
    const fs::path out = argc > 2 ? fs::path(argv[2]) : fs::path("acceptance_out");
    fs::create_directories(out);

    bool all = true;
    auto report = [&](int n, const Verdict& v) {
        all = all && v.pass;
        std::cout << "criterion " << n << ": " << (v.pass ? "PASS" : "FAIL") << " (" << v.detail << ")\n"
                  << std::flush;
    };
    auto guarded = [](const std::function<Verdict()>& f) {
        try {
            return f();
        } catch (const std::exception& e) {
            return Verdict{false, std::string("error: ") + e.what()};
        }
    };

    report(1, guarded(transform_exactness));
    report(2, guarded(ga_invariants));
    report(3, guarded(rastrigin_check));
    report(4, guarded(metrics_oracle));
    report(5, guarded(gradient_check));

    RunConfig base;
    try {
        base = load_run_config(config);
    } catch (const std::exception& e) {
        report(6, {false, e.what()});
        report(7, {false, e.what()});
        report(8, {false, e.what()});
        report(9, guarded(split_arithmetic));
        return 1;
    }

    std::optional<EndToEnd> e2e;
    std::string e2e_error;
    try {
        e2e = run_end_to_end(base, out / "search");
    } catch (const std::exception& e) {
        e2e_error = e.what();
    }
    if (e2e) {
        const double med = median(e2e->gains_pp);
        const double slowest = *std::max_element(e2e->minutes.begin(), e2e->minutes.end());
        std::ostringstream gains;
        for (double g : e2e->gains_pp) {
            gains << fmt("%+.1f", g) << ' ';
        }
        report(6, {med >= 2.0 && slowest <= 15.0, "median test MPCA gain " + fmt("%+.1f pp", med) + " over seeds [ " +
                                                      gains.str() + "], slowest search " +
                                                      fmt("%.1f min", slowest)});
        const auto lower = std::count(e2e->color_lower.begin(), e2e->color_lower.end(), true);
        std::string detail = "hue class below shape class on Color mean in " + std::to_string(lower) + "/3 seeds";
        for (const auto& a : e2e->analyses) {
            detail += "\n" + a;
        }
        report(7, {lower >= 2, detail});
    } else {
        report(6, {false, "error: " + e2e_error});
        report(7, {false, "error: " + e2e_error});
    }

    report(8, guarded([&] { return order_experiment(base, out / "order"); }));
    report(9, guarded(split_arithmetic));
    return all ? 0 : 1;
}
