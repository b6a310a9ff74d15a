#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace polysearch {

/// Raised when a metric needs a class that has no samples (or no negatives).
class UndefinedClassError : public std::domain_error {
public:
    UndefinedClassError(std::size_t cls, const std::string& what)
        : std::domain_error(what), class_index_(cls)
    {
    }
    std::size_t class_index() const { return class_index_; }

private:
    std::size_t class_index_;
};

/// counts(t, p) = number of samples of true class t predicted as p.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::vector<std::string> class_names)
        : names_(std::move(class_names)), counts_(names_.size() * names_.size(), 0)
    {
        if (names_.empty()) {
            throw std::invalid_argument("ConfusionMatrix: no classes");
        }
    }

    /// From a square table of counts; classes are named "0", "1", ...
    static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows)
    {
        std::vector<std::string> names;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            names.push_back(std::to_string(i));
        }
        ConfusionMatrix cm(std::move(names));
        for (std::size_t t = 0; t < rows.size(); ++t) {
            if (rows[t].size() != rows.size()) {
                throw std::invalid_argument("ConfusionMatrix: rows must be square");
            }
            for (std::size_t p = 0; p < rows.size(); ++p) {
                cm.counts_[t * rows.size() + p] = rows[t][p];
            }
        }
        return cm;
    }

    std::size_t num_classes() const { return names_.size(); }
    const std::vector<std::string>& class_names() const { return names_; }

    void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1)
    {
        if (truth >= num_classes() || predicted >= num_classes()) {
            throw std::out_of_range("ConfusionMatrix::add: class index out of range");
        }
        counts_[truth * num_classes() + predicted] += n;
    }

    std::uint64_t operator()(std::size_t truth, std::size_t predicted) const
    {
        return counts_[truth * num_classes() + predicted];
    }

    std::uint64_t row_sum(std::size_t truth) const
    {
        std::uint64_t s = 0;
        for (std::size_t p = 0; p < num_classes(); ++p) {
            s += (*this)(truth, p);
        }
        return s;
    }

    std::uint64_t col_sum(std::size_t predicted) const
    {
        std::uint64_t s = 0;
        for (std::size_t t = 0; t < num_classes(); ++t) {
            s += (*this)(t, predicted);
        }
        return s;
    }

    std::uint64_t total() const
    {
        std::uint64_t s = 0;
        for (auto c : counts_) {
            s += c;
        }
        return s;
    }

    std::uint64_t trace() const
    {
        std::uint64_t s = 0;
        for (std::size_t i = 0; i < num_classes(); ++i) {
            s += (*this)(i, i);
        }
        return s;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::vector<std::string> names_;
    std::vector<std::uint64_t> counts_;
};

inline std::vector<double> per_class_accuracy(const ConfusionMatrix& cm)
{
    std::vector<double> acc(cm.num_classes());
    for (std::size_t i = 0; i < cm.num_classes(); ++i) {
        const auto n = cm.row_sum(i);
        if (n == 0) {
            throw UndefinedClassError(i, "class " + std::to_string(i) + " ('" + cm.class_names()[i] +
                                             "') has no samples; per-class accuracy undefined");
        }
        acc[i] = static_cast<double>(cm(i, i)) / static_cast<double>(n);
    }
    return acc;
}

/// Mean-per-class accuracy: the unweighted mean of per-class recalls.
inline double mpca(const ConfusionMatrix& cm)
{
    const auto acc = per_class_accuracy(cm);
    double s = 0.0;
    for (double a : acc) {
        s += a;
    }
    return s / static_cast<double>(acc.size());
}

inline double overall_accuracy(const ConfusionMatrix& cm)
{
    const auto n = cm.total();
    if (n == 0) {
        throw std::invalid_argument("overall_accuracy: empty confusion matrix");
    }
    return static_cast<double>(cm.trace()) / static_cast<double>(n);
}

struct SensitivitySpecificity {
    double sensitivity;
    double specificity;
};

/// Macro-averaged one-vs-rest sensitivity and specificity.
inline SensitivitySpecificity sensitivity_specificity(const ConfusionMatrix& cm)
{
    const std::size_t c = cm.num_classes();
    const auto total = cm.total();
    double sens = 0.0;
    double spec = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        const auto tp = cm(i, i);
        const auto fn = cm.row_sum(i) - tp;
        const auto fp = cm.col_sum(i) - tp;
        const auto tn = total - tp - fn - fp;
        if (tp + fn == 0) {
            throw UndefinedClassError(i, "class " + std::to_string(i) + " has no samples; sensitivity undefined");
        }
        if (tn + fp == 0) {
            throw UndefinedClassError(i, "class " + std::to_string(i) + " has no negatives; specificity undefined");
        }
        sens += static_cast<double>(tp) / static_cast<double>(tp + fn);
        spec += static_cast<double>(tn) / static_cast<double>(tn + fp);
    }
    return {sens / static_cast<double>(c), spec / static_cast<double>(c)};
}

/// CSV with a header row and a leading column of class names; rows are true classes.
inline void write_confusion_csv(std::ostream& os, const ConfusionMatrix& cm)
{
    os << "true\\predicted";
    for (const auto& n : cm.class_names()) {
        os << ',' << n;
    }
    os << '\n';
    for (std::size_t t = 0; t < cm.num_classes(); ++t) {
        os << cm.class_names()[t];
        for (std::size_t p = 0; p < cm.num_classes(); ++p) {
            os << ',' << cm(t, p);
        }
        os << '\n';
    }
}

/// Per-class figures for the soybean stress classes that motivated this
/// method (bacterial blight and bacterial pustule), baseline vs optimized.
/// Reference context for reports; these are never expected at desk scale.
namespace reference {
inline constexpr double kBlightBaseline = 0.8301;
inline constexpr double kBlightOptimized = 0.8889;
inline constexpr double kPustuleBaseline = 0.8571;
inline constexpr double kPustuleOptimized = 0.9405;
inline constexpr double kMpcaBaseline = 0.9509;
inline constexpr double kMpcaOptimized = 0.9761;
} // namespace reference

} // namespace polysearch
