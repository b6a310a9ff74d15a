#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "polysearch/grid.hpp"
#include "polysearch/random.hpp"

namespace polysearch {

/// Class x augmentation matrix of application probabilities on a fixed grid.
///
/// Row i belongs to class i of the dataset, column j to transform j of the
/// canonical pool. Immutable once built; every constructor path validates.
class PolicyMatrix {
public:
    PolicyMatrix(std::size_t num_classes, std::size_t num_augs, double grid_step, std::vector<double> probs)
        : num_classes_(num_classes), num_augs_(num_augs), grid_step_(grid_step), probs_(std::move(probs))
    {
        validate();
    }

    /// All-zero policy: nothing ever fires.
    static PolicyMatrix zeros(std::size_t num_classes, std::size_t num_augs, double grid_step)
    {
        return PolicyMatrix(num_classes, num_augs, grid_step, std::vector<double>(num_classes * num_augs, 0.0));
    }

    std::size_t num_classes() const { return num_classes_; }
    std::size_t num_augs() const { return num_augs_; }
    double grid_step() const { return grid_step_; }

    double at(std::size_t cls, std::size_t aug) const
    {
        if (cls >= num_classes_ || aug >= num_augs_) {
            throw std::out_of_range("PolicyMatrix::at");
        }
        return probs_[cls * num_augs_ + aug];
    }

    std::span<const double> row(std::size_t cls) const
    {
        if (cls >= num_classes_) {
            throw std::out_of_range("PolicyMatrix::row");
        }
        return std::span<const double>(probs_).subspan(cls * num_augs_, num_augs_);
    }

    /// Row-major genes; gene (i, j) sits at i * num_augs + j.
    const std::vector<double>& genes() const { return probs_; }

    friend bool operator==(const PolicyMatrix&, const PolicyMatrix&) = default;

private:
    void validate() const
    {
        if (num_classes_ == 0 || num_augs_ == 0) {
            throw std::invalid_argument("PolicyMatrix: dimensions must be positive");
        }
        if (!(grid_step_ > 0.0 && grid_step_ <= 1.0)) {
            throw std::invalid_argument("PolicyMatrix: grid_step must lie in (0, 1]");
        }
        if (probs_.size() != num_classes_ * num_augs_) {
            throw std::invalid_argument("PolicyMatrix: expected " + std::to_string(num_classes_ * num_augs_) +
                                        " genes, got " + std::to_string(probs_.size()));
        }
        for (std::size_t k = 0; k < probs_.size(); ++k) {
            const double p = probs_[k];
            if (!(p >= 0.0 && p <= 1.0) || !on_grid(p, grid_step_)) {
                throw std::invalid_argument("PolicyMatrix: gene " + std::to_string(k) + " = " + std::to_string(p) +
                                            " is not a grid probability");
            }
        }
    }

    std::size_t num_classes_;
    std::size_t num_augs_;
    double grid_step_;
    std::vector<double> probs_;
};

inline std::size_t gene_index(std::size_t cls, std::size_t aug, std::size_t num_augs) { return cls * num_augs + aug; }

inline std::vector<double> flatten(const PolicyMatrix& p) { return p.genes(); }

inline PolicyMatrix unflatten(std::span<const double> genes, std::size_t num_classes, std::size_t num_augs,
                              double grid_step)
{
    if (genes.size() != num_classes * num_augs) {
        throw std::invalid_argument("unflatten: gene vector length " + std::to_string(genes.size()) +
                                    " does not match " + std::to_string(num_classes) + "x" +
                                    std::to_string(num_augs));
    }
    return PolicyMatrix(num_classes, num_augs, grid_step, std::vector<double>(genes.begin(), genes.end()));
}

inline PolicyMatrix random_policy(std::size_t num_classes, std::size_t num_augs, double grid_step, Seed seed)
{
    if (num_classes == 0 || num_augs == 0) {
        throw std::invalid_argument("random_policy: dimensions must be positive");
    }
    const GeneGrid grid(grid_step);
    auto rng = make_rng(seed);
    std::vector<double> genes(num_classes * num_augs);
    for (auto& g : genes) {
        g = grid.draw(rng);
    }
    return PolicyMatrix(num_classes, num_augs, grid_step, std::move(genes));
}

} // namespace polysearch
