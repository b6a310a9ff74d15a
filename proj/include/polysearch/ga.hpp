#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <exception>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "polysearch/grid.hpp"
#include "polysearch/random.hpp"

namespace polysearch {

using Genome = std::vector<double>;

struct Individual {
    Genome genome;
    std::optional<double> fitness; // higher is better; -inf marks a failed evaluation
    Seed eval_seed = 0;
};

struct GAConfig {
    std::size_t population_size = 100;
    std::size_t max_generations = 100;
    std::size_t stagnation_limit = 10;
    std::size_t num_parents_kept = 20;
    double mutation_rate = 0.05;
    std::size_t elite_count = 2;
    Seed master_seed = 0;

    void validate() const
    {
        if (population_size < 2) {
            throw std::invalid_argument("GAConfig: population_size must be at least 2");
        }
        if (elite_count < 1) {
            throw std::invalid_argument("GAConfig: elite_count must be at least 1");
        }
        if (elite_count > num_parents_kept || num_parents_kept > population_size) {
            throw std::invalid_argument("GAConfig: need elite_count <= num_parents_kept <= population_size");
        }
        if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) {
            throw std::invalid_argument("GAConfig: mutation_rate must lie in [0, 1]");
        }
        if (max_generations < 1) {
            throw std::invalid_argument("GAConfig: max_generations must be at least 1");
        }
        if (stagnation_limit < 1) {
            throw std::invalid_argument("GAConfig: stagnation_limit must be at least 1");
        }
    }
};

struct GenomeSpec {
    std::size_t length;
    GeneGrid grid;
};

struct GenerationRecord {
    std::size_t generation; // 1-based; generation 1 is the initial population
    double best_fitness;
    double mean_fitness; // over finite fitnesses only
    std::size_t evaluations;
    double elapsed_seconds;
};

enum class TerminationReason { MaxGenerations, Stagnation };

inline const char* to_string(TerminationReason r)
{
    return r == TerminationReason::MaxGenerations ? "max_generations" : "stagnation";
}

struct SearchResult {
    Individual best_individual;
    std::vector<GenerationRecord> history;
    TerminationReason termination_reason = TerminationReason::MaxGenerations;
    std::size_t total_evaluations = 0;
};

// ---------------------------------------------------------------------------
// operators

/// Indices of the k fittest individuals, best first; ties go to the lower index.
inline std::vector<std::size_t> select_parent_indices(std::span<const Individual> population, std::size_t k)
{
    if (k > population.size()) {
        throw std::invalid_argument("select_parents: k exceeds population size");
    }
    for (const auto& ind : population) {
        if (!ind.fitness) {
            throw std::logic_error("select_parents: unevaluated individual");
        }
    }
    std::vector<std::size_t> idx(population.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return *population[a].fitness > *population[b].fitness; });
    idx.resize(k);
    return idx;
}

inline std::vector<Individual> select_parents(std::span<const Individual> population, std::size_t k)
{
    std::vector<Individual> out;
    for (auto i : select_parent_indices(population, k)) {
        out.push_back(population[i]);
    }
    return out;
}

/// Children a[0..cut) + b[cut..L) and b[0..cut) + a[cut..L).
inline std::pair<Genome, Genome> crossover_at(std::span<const double> a, std::span<const double> b, std::size_t cut)
{
    if (a.size() != b.size()) {
        throw std::invalid_argument("crossover: parent lengths differ");
    }
    if (cut > a.size()) {
        throw std::invalid_argument("crossover: cut point out of range");
    }
    Genome c1(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(cut));
    c1.insert(c1.end(), b.begin() + static_cast<std::ptrdiff_t>(cut), b.end());
    Genome c2(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(cut));
    c2.insert(c2.end(), a.begin() + static_cast<std::ptrdiff_t>(cut), a.end());
    return {std::move(c1), std::move(c2)};
}

/// Single-point crossover with the cut drawn uniformly from {1, ..., L-1}.
inline std::pair<Genome, Genome> single_point_crossover(std::span<const double> a, std::span<const double> b, Rng& rng)
{
    if (a.size() != b.size()) {
        throw std::invalid_argument("crossover: parent lengths differ");
    }
    if (a.size() < 2) {
        throw std::invalid_argument("crossover: genomes need at least two genes");
    }
    return crossover_at(a, b, uniform_int(rng, 1, a.size() - 1));
}

/// Random-reset mutation: each gene is redrawn from the grid with probability `rate`.
inline Genome mutate(std::span<const double> genome, double rate, const GeneGrid& grid, Rng& rng)
{
    Genome out(genome.begin(), genome.end());
    for (auto& g : out) {
        // always consume the uniform so the RNG stream does not depend on rate
        if (uniform01(rng) < rate) {
            g = grid.draw(rng);
        }
    }
    return out;
}

struct TerminationCheck {
    bool stop = false;
    std::optional<TerminationReason> reason;
};

inline TerminationCheck should_terminate(std::span<const GenerationRecord> history, const GAConfig& config)
{
    if (history.empty()) {
        throw std::invalid_argument("should_terminate: empty history");
    }
    if (history.back().generation >= config.max_generations) {
        return {true, TerminationReason::MaxGenerations};
    }
    std::size_t since_improvement = 0;
    double best = history.front().best_fitness;
    for (std::size_t i = 1; i < history.size(); ++i) {
        if (history[i].best_fitness > best) {
            best = history[i].best_fitness;
            since_improvement = 0;
        } else {
            ++since_improvement;
        }
    }
    if (since_improvement >= config.stagnation_limit) {
        return {true, TerminationReason::Stagnation};
    }
    return {};
}

inline double rastrigin(std::span<const double> x)
{
    double sum = 10.0 * static_cast<double>(x.size());
    for (double xi : x) {
        sum += xi * xi - 10.0 * std::cos(2.0 * std::numbers::pi * xi);
    }
    return sum;
}

// ---------------------------------------------------------------------------
// engine

/// Exact-match cache keyed by the raw bytes of the gene vector. Each entry
/// remembers the evaluation seed that produced it, so a cached result can be
/// reproduced later.
class FitnessCache {
public:
    struct Entry {
        Genome genome;
        double fitness;
        Seed seed;
    };

    static std::string key(std::span<const double> genome)
    {
        std::string k(genome.size() * sizeof(double), '\0');
        if (!genome.empty()) {
            std::memcpy(k.data(), genome.data(), k.size());
        }
        return k;
    }

    std::optional<double> find(std::span<const double> genome) const
    {
        auto it = entries_.find(key(genome));
        if (it == entries_.end()) {
            return std::nullopt;
        }
        return it->second.first;
    }

    std::optional<Seed> seed_of(std::span<const double> genome) const
    {
        auto it = entries_.find(key(genome));
        if (it == entries_.end()) {
            return std::nullopt;
        }
        return it->second.second;
    }

    void insert(std::span<const double> genome, double fitness, Seed seed = 0)
    {
        entries_.emplace(key(genome), std::pair{fitness, seed});
    }

    std::size_t size() const { return entries_.size(); }

    /// All entries, sorted by genome so serialised caches are stable.
    std::vector<Entry> entries() const
    {
        std::vector<Entry> out;
        out.reserve(entries_.size());
        for (const auto& [k, v] : entries_) {
            Genome g(k.size() / sizeof(double));
            std::memcpy(g.data(), k.data(), k.size());
            out.push_back({std::move(g), v.first, v.second});
        }
        std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) { return a.genome < b.genome; });
        return out;
    }

private:
    std::unordered_map<std::string, std::pair<double, Seed>> entries_;
};

/// Everything needed to continue a search after the last completed generation.
struct EngineState {
    std::size_t generation = 0;
    std::vector<Individual> population;
    std::vector<GenerationRecord> history;
    Individual best;
    std::string rng_state;
    FitnessCache cache;
    std::size_t total_evaluations = 0;
};

struct EvolveOptions {
    std::size_t workers = 1;
    /// Called after every evaluated generation (checkpointing, progress).
    std::function<void(const EngineState&)> on_generation;
    std::function<void(const std::string&)> log = [](const std::string& msg) { std::cerr << msg << '\n'; };
    /// Continue from a saved state instead of a fresh population.
    std::optional<EngineState> resume_from;
};

/// Fitness callables take (genome, eval_seed) and must be safe to call from
/// several threads at once.
template <typename F>
concept FitnessFunction = std::invocable<F&, std::span<const double>, Seed> &&
                          std::convertible_to<std::invoke_result_t<F&, std::span<const double>, Seed>, double>;

namespace detail {

inline Seed eval_seed_for(Seed master, std::size_t generation, std::size_t slot)
{
    return mix_seed({master, generation, slot});
}

template <FitnessFunction F>
std::size_t evaluate_population(std::vector<Individual>& population, std::size_t generation, const GAConfig& config,
                                FitnessCache& cache, F& fitness, const EvolveOptions& opts)
{
    struct Task {
        std::size_t slot;
        double result;
        std::string error;
    };
    std::vector<Task> tasks;
    std::unordered_map<std::string, std::size_t> pending; // key -> task index
    std::vector<std::pair<std::size_t, std::size_t>> waiting; // (slot, task)

    for (std::size_t i = 0; i < population.size(); ++i) {
        auto& ind = population[i];
        if (ind.fitness) {
            continue;
        }
        if (auto hit = cache.find(ind.genome)) {
            ind.fitness = *hit;
            ind.eval_seed = *cache.seed_of(ind.genome);
            continue;
        }
        ind.eval_seed = eval_seed_for(config.master_seed, generation, i);
        auto key = FitnessCache::key(ind.genome);
        auto [it, fresh] = pending.emplace(std::move(key), tasks.size());
        if (fresh) {
            tasks.push_back({i, 0.0, {}});
        }
        waiting.emplace_back(i, it->second);
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t = next.fetch_add(1); t < tasks.size(); t = next.fetch_add(1)) {
            auto& task = tasks[t];
            const auto& ind = population[task.slot];
            try {
                const double f = static_cast<double>(fitness(std::span<const double>(ind.genome), ind.eval_seed));
                if (std::isnan(f)) {
                    throw std::runtime_error("fitness is NaN");
                }
                task.result = f;
            } catch (const std::exception& e) {
                task.result = -std::numeric_limits<double>::infinity();
                task.error = e.what();
            } catch (...) {
                task.result = -std::numeric_limits<double>::infinity();
                task.error = "unknown exception";
            }
        }
    };
    const std::size_t n_threads = std::min(std::max<std::size_t>(opts.workers, 1), tasks.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_threads);
        for (std::size_t w = 0; w < n_threads; ++w) {
            pool.emplace_back(worker);
        }
    }

    for (const auto& task : tasks) {
        if (!task.error.empty() && opts.log) {
            opts.log("generation " + std::to_string(generation) + " slot " + std::to_string(task.slot) +
                     ": evaluation failed (" + task.error + "), fitness set to -inf");
        }
        cache.insert(population[task.slot].genome, task.result, population[task.slot].eval_seed);
    }
    // duplicates inside one generation share the first copy's result and seed
    for (auto [slot, t] : waiting) {
        population[slot].fitness = tasks[t].result;
        population[slot].eval_seed = population[tasks[t].slot].eval_seed;
    }
    return tasks.size();
}

inline GenerationRecord summarize(const std::vector<Individual>& population, std::size_t generation,
                                  std::size_t evaluations, double elapsed)
{
    double best = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    std::size_t finite = 0;
    for (const auto& ind : population) {
        best = std::max(best, *ind.fitness);
        if (std::isfinite(*ind.fitness)) {
            sum += *ind.fitness;
            ++finite;
        }
    }
    const double mean = finite ? sum / static_cast<double>(finite) : std::numeric_limits<double>::quiet_NaN();
    return {generation, best, mean, evaluations, elapsed};
}

inline void update_best(Individual& best, const std::vector<Individual>& population)
{
    for (const auto& ind : population) {
        if (!best.fitness || *ind.fitness > *best.fitness) {
            best = ind;
        }
    }
}

} // namespace detail

/// Steady-state generational loop.
///
/// Each generation the `num_parents_kept` fittest individuals survive
/// unchanged (the first `elite_count` of them in the leading slots) and the
/// remaining slots are refilled with offspring bred from those parents by
/// single-point crossover and random-reset mutation. Only genomes not seen
/// before are handed to `fitness`.
template <FitnessFunction F>
SearchResult evolve(const GAConfig& config, const GenomeSpec& spec, F&& fitness, EvolveOptions opts = {})
{
    config.validate();
    if (spec.length == 0) {
        throw std::invalid_argument("evolve: genome length must be positive");
    }
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    double elapsed_offset = 0.0;
    auto elapsed = [&] { return elapsed_offset + std::chrono::duration<double>(clock::now() - start).count(); };

    EngineState state;
    Rng rng;
    if (opts.resume_from) {
        state = std::move(*opts.resume_from);
        opts.resume_from.reset();
        if (state.population.size() != config.population_size || state.history.empty()) {
            throw std::invalid_argument("evolve: resume state does not match configuration");
        }
        rng = rng_from_state(state.rng_state);
        elapsed_offset = state.history.back().elapsed_seconds;
    } else {
        rng = make_rng(mix_seed({config.master_seed, 0x6761ULL}));
        state.population.resize(config.population_size);
        for (auto& ind : state.population) {
            ind.genome.resize(spec.length);
            for (auto& g : ind.genome) {
                g = spec.grid.draw(rng);
            }
        }
        state.generation = 1;
        const auto evals =
            detail::evaluate_population(state.population, state.generation, config, state.cache, fitness, opts);
        state.total_evaluations += evals;
        state.history.push_back(detail::summarize(state.population, state.generation, evals, elapsed()));
        detail::update_best(state.best, state.population);
        state.rng_state = rng_state(rng);
        if (opts.on_generation) {
            opts.on_generation(state);
        }
    }

    TerminationCheck check = should_terminate(state.history, config);
    while (!check.stop) {
        const auto parent_idx = select_parent_indices(state.population, config.num_parents_kept);
        std::vector<Individual> next;
        next.reserve(config.population_size);
        for (auto i : parent_idx) {
            next.push_back(state.population[i]);
        }
        while (next.size() < config.population_size) {
            const auto& pa = state.population[parent_idx[uniform_int(rng, 0, parent_idx.size() - 1)]].genome;
            const auto& pb = state.population[parent_idx[uniform_int(rng, 0, parent_idx.size() - 1)]].genome;
            auto [c1, c2] = spec.length >= 2 ? single_point_crossover(pa, pb, rng) : std::pair{pa, pb};
            for (Genome* child : {&c1, &c2}) {
                if (next.size() == config.population_size) {
                    break;
                }
                Genome m = mutate(*child, config.mutation_rate, spec.grid, rng);
                for (auto& g : m) {
                    g = spec.grid.snap(g);
                }
                next.push_back(Individual{std::move(m), std::nullopt, 0});
            }
        }
        state.population = std::move(next);
        ++state.generation;
        const auto evals =
            detail::evaluate_population(state.population, state.generation, config, state.cache, fitness, opts);
        state.total_evaluations += evals;
        state.history.push_back(detail::summarize(state.population, state.generation, evals, elapsed()));
        detail::update_best(state.best, state.population);
        state.rng_state = rng_state(rng);
        if (opts.on_generation) {
            opts.on_generation(state);
        }
        check = should_terminate(state.history, config);
    }

    SearchResult result;
    result.best_individual = state.best;
    result.history = std::move(state.history);
    result.termination_reason = *check.reason;
    result.total_evaluations = state.total_evaluations;
    return result;
}

} // namespace polysearch
