// Command-line front end for the polysearch library.
//
// Exit codes: 0 on success, 1 when a check does not pass, 2 on configuration
// or I/O errors.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "polysearch/orchestrator.hpp"

namespace ps = polysearch;

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<std::string> output;
    bool resume = false;
};

void add_common(CLI::App* cmd, CommonFlags& f)
{
    cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "GA master seed (overrides the config)");
    cmd->add_option("--workers", f.workers, "parallel fitness evaluations (default: POLYSEARCH_WORKERS or all cores)");
    cmd->add_option("--output", f.output, "output directory (overrides the config)");
}

ps::RunConfig build_config(const CommonFlags& f)
{
    ps::RunConfig cfg = f.config.empty() ? ps::RunConfig{} : ps::load_run_config(f.config);
    if (f.seed) {
        cfg.ga.master_seed = *f.seed;
    }
    if (f.workers) {
        cfg.workers = *f.workers;
    }
    if (f.output) {
        cfg.output_dir = *f.output;
    }
    cfg.resume = f.resume;
    return cfg;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Search for class-specific image augmentation policies with a genetic algorithm"};
    app.require_subcommand(1);

    CommonFlags search_flags;
    auto* search = app.add_subcommand("search", "run a policy search and write the report");
    add_common(search, search_flags);
    search->add_flag("--resume", search_flags.resume, "continue from checkpoint.json in the output directory");

    CommonFlags order_flags;
    auto* order = app.add_subcommand("order-experiment", "repeat the search for all six category orders");
    add_common(order, order_flags);

    CommonFlags preview_flags;
    std::string preview_policy;
    std::size_t preview_n = 4;
    auto* preview = app.add_subcommand("preview", "render the most and least likely transforms per class");
    add_common(preview, preview_flags);
    preview->add_option("--policy", preview_policy, "policy.json to preview")->required()->check(CLI::ExistingFile);
    preview->add_option("-n,--samples", preview_n, "images per class")->check(CLI::PositiveNumber);

    std::size_t rast_dims = 5;
    std::uint64_t rast_seed = 0;
    ps::GAConfig rast_ga;
    double rast_step = 0.01;
    double rast_ratio = 0.5;
    auto* rast = app.add_subcommand("rastrigin-check", "sanity-check the GA on the Rastrigin function");
    rast->add_option("--dims", rast_dims, "number of dimensions")->check(CLI::PositiveNumber);
    rast->add_option("--seed", rast_seed, "master seed");
    rast->add_option("--population", rast_ga.population_size, "population size");
    rast->add_option("--generations", rast_ga.max_generations, "generation cap");
    rast->add_option("--grid-step", rast_step, "gene grid step");
    rast->add_option("--max-ratio", rast_ratio, "fail unless final best <= ratio * initial best");

    std::string analyze_policy;
    std::optional<std::string> analyze_out;
    auto* analyze = app.add_subcommand("analyze-policy", "per-class category means and transform ranking");
    analyze->add_option("policy", analyze_policy, "policy.json")->required()->check(CLI::ExistingFile);
    analyze->add_option("--output", analyze_out, "also write policy_categories.csv and policy_summary.txt here");

    ps::SynthConfig synth;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth-data", "write the synthetic confounder dataset as class folders");
    synth_cmd->add_option("--output", synth_out, "destination directory")->required();
    synth_cmd->add_option("--images-per-class", synth.images_per_class, "images per class");
    synth_cmd->add_option("--side", synth.image_side, "image side in pixels");
    synth_cmd->add_option("--seed", synth.seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (search->parsed()) {
            const auto cfg = build_config(search_flags);
            const auto out = ps::cmd_search(cfg);
            std::cout << "validation MPCA: baseline " << out.baseline_val_mpca << ", optimized "
                      << out.optimized_val_mpca << "\n"
                      << "test MPCA: baseline " << out.baseline_test.mpca << ", optimized "
                      << out.optimized_test.mpca << "\n"
                      << "report: " << out.artifacts.report.string() << "\n";
        } else if (order->parsed()) {
            const auto rows = ps::cmd_order_experiment(build_config(order_flags));
            std::cout << "order,mpca,overall_accuracy\n";
            for (const auto& r : rows) {
                std::cout << r.order << ',' << r.mpca << ',' << r.overall_accuracy << '\n';
            }
        } else if (preview->parsed()) {
            const auto cfg = build_config(preview_flags);
            auto ds = ps::load_dataset(cfg.data, cfg.log);
            const auto doc = ps::load_policy(preview_policy);
            for (const auto& p : ps::cmd_preview(doc, ds, preview_n, cfg.ga.master_seed, cfg.output_dir)) {
                std::cout << p.string() << '\n';
            }
        } else if (rast->parsed()) {
            rast_ga.master_seed = rast_seed;
            rast_ga.num_parents_kept = std::min(rast_ga.num_parents_kept, rast_ga.population_size / 2);
            rast_ga.elite_count = std::min(rast_ga.elite_count, rast_ga.num_parents_kept);
            const auto s = ps::cmd_rastrigin_check(rast_dims, rast_ga, rast_step);
            const bool ok = s.final_best <= rast_ratio * s.initial_best;
            std::cout << "initial best " << s.initial_best << ", final best " << s.final_best << " after "
                      << s.generations << " generations (" << (ok ? "pass" : "fail") << ")\n";
            return ok ? 0 : 1;
        } else if (analyze->parsed()) {
            const auto doc = ps::load_policy(analyze_policy);
            std::cout << ps::cmd_analyze_policy(doc, analyze_out ? std::optional<ps::fs::path>(*analyze_out)
                                                                  : std::nullopt)
                             .text;
        } else if (synth_cmd->parsed()) {
            ps::save_class_folders(synth_out, ps::generate_confounder(synth));
        }
    } catch (const ps::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ps::FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
