#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "polysearch/random.hpp"

namespace polysearch {

namespace detail {
constexpr double kGridTolerance = 1e-9;
}

/// Nearest multiple of `grid_step` in [0, 1], ties rounded up.
///
/// When 1 is not itself a multiple of the step the result is clamped to
/// the largest multiple not exceeding 1.
inline double quantize(double value, double grid_step)
{
    if (!std::isfinite(value)) {
        throw std::invalid_argument("quantize: non-finite value");
    }
    if (!(grid_step > 0.0 && grid_step <= 1.0)) {
        throw std::invalid_argument("quantize: grid_step must lie in (0, 1]");
    }
    const double inv = 1.0 / grid_step;
    const auto k_max = static_cast<long long>(std::floor(inv + detail::kGridTolerance));
    long long k = 0;
    if (value > 0.0) {
        const double scaled = std::min(value, 2.0) * inv;
        k = static_cast<long long>(std::floor(scaled + 0.5 + detail::kGridTolerance));
    }
    k = std::clamp(k, 0LL, k_max);
    // k / inv prints as the short decimal (0.3, not 0.30000000000000004)
    // whenever the step is the reciprocal of an integer.
    const double rinv = std::round(inv);
    if (std::abs(inv - rinv) < detail::kGridTolerance) {
        return static_cast<double>(k) / rinv;
    }
    return static_cast<double>(k) * grid_step;
}

inline bool on_grid(double value, double grid_step)
{
    if (!std::isfinite(value) || value < -detail::kGridTolerance || value > 1.0 + detail::kGridTolerance) {
        return false;
    }
    const double k = value / grid_step;
    return std::abs(k - std::round(k)) * grid_step <= detail::kGridTolerance;
}

/// The finite set {0, step, 2 step, ...} intersected with [0, 1].
class GeneGrid {
public:
    explicit GeneGrid(double step) : step_(step)
    {
        if (!(step > 0.0 && step <= 1.0)) {
            throw std::invalid_argument("grid_step must lie in (0, 1]");
        }
        const auto n = static_cast<std::size_t>(std::floor(1.0 / step + detail::kGridTolerance)) + 1;
        values_.reserve(n);
        for (std::size_t k = 0; k < n; ++k) {
            values_.push_back(quantize(static_cast<double>(k) * step, step));
        }
    }

    /// Explicit value set, for mutation tests with degenerate grids.
    static GeneGrid from_values(std::vector<double> values)
    {
        if (values.empty()) {
            throw std::invalid_argument("GeneGrid: empty value set");
        }
        GeneGrid g;
        g.step_ = 0.0;
        g.values_ = std::move(values);
        return g;
    }

    double step() const { return step_; }
    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }

    double draw(Rng& rng) const { return values_[uniform_int(rng, 0, values_.size() - 1)]; }

    /// Snaps onto the grid. Explicit value sets snap to the nearest member.
    double snap(double v) const
    {
        if (step_ > 0.0) {
            return quantize(v, step_);
        }
        double best = values_.front();
        for (double c : values_) {
            if (std::abs(c - v) < std::abs(best - v)) {
                best = c;
            }
        }
        return best;
    }

private:
    GeneGrid() = default;

    double step_ = 0.0;
    std::vector<double> values_;
};

} // namespace polysearch
