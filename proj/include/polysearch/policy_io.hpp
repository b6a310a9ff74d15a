#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "polysearch/augment.hpp"
#include "polysearch/dataset.hpp"
#include "polysearch/policy.hpp"

namespace polysearch {

/// A policy together with the class names its rows belong to.
struct PolicyDocument {
    std::vector<std::string> class_names;
    PolicyMatrix policy;
};

/// Policy JSON: {"classes", "augmentations", "grid_step", "probabilities"}, keys in that order,
/// two-space indent, trailing newline. Saving a loaded document reproduces it byte for byte.
inline std::string policy_to_json(const PolicyDocument& doc)
{
    const auto& p = doc.policy;
    if (doc.class_names.size() != p.num_classes()) {
        throw std::invalid_argument("policy_to_json: class name count does not match policy rows");
    }
    if (p.num_augs() != kNumAugmentations) {
        throw std::invalid_argument("policy_to_json: policy must cover the full transform pool");
    }
    nlohmann::ordered_json j;
    j["classes"] = doc.class_names;
    j["augmentations"] = canonical_names();
    j["grid_step"] = p.grid_step();
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < p.num_classes(); ++c) {
        const auto r = p.row(c);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    j["probabilities"] = std::move(rows);
    return j.dump(2) + "\n";
}

inline PolicyDocument policy_from_json(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("policy file: ") + e.what());
    }
    for (const char* key : {"classes", "augmentations", "grid_step", "probabilities"}) {
        if (!j.contains(key)) {
            throw FormatError(std::string("policy file: missing key '") + key + "'");
        }
    }
    try {
        auto classes = j.at("classes").get<std::vector<std::string>>();
        const auto augs = j.at("augmentations").get<std::vector<std::string>>();
        const auto& pool = canonical_pool();
        for (std::size_t k = 0; k < augs.size(); ++k) {
            const auto found = find_augmentation(augs[k]);
            if (!found) {
                throw FormatError("policy file: unknown transform '" + augs[k] + "'");
            }
            if (*found != k) {
                throw FormatError("policy file: transform '" + augs[k] + "' at position " + std::to_string(k) +
                                  ", canonical position is " + std::to_string(*found));
            }
        }
        if (augs.size() != pool.size()) {
            throw FormatError("policy file: expected " + std::to_string(pool.size()) + " transforms, got " +
                              std::to_string(augs.size()));
        }
        const double step = j.at("grid_step").get<double>();
        const auto rows = j.at("probabilities").get<std::vector<std::vector<double>>>();
        if (rows.size() != classes.size()) {
            throw FormatError("policy file: " + std::to_string(rows.size()) + " probability rows for " +
                              std::to_string(classes.size()) + " classes");
        }
        std::vector<double> genes;
        for (const auto& r : rows) {
            if (r.size() != augs.size()) {
                throw FormatError("policy file: probability row of length " + std::to_string(r.size()));
            }
            genes.insert(genes.end(), r.begin(), r.end());
        }
        return {std::move(classes), PolicyMatrix(rows.size(), augs.size(), step, std::move(genes))};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("policy file: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("policy file: ") + e.what());
    }
}

inline PolicyDocument load_policy(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open policy file '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return policy_from_json(ss.str());
}

inline void save_policy(const std::filesystem::path& path, const PolicyDocument& doc)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write policy file '" + path.string() + "'");
    }
    out << policy_to_json(doc);
}

} // namespace polysearch
