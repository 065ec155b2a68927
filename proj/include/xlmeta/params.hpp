#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "xlmeta/autodiff.hpp"

namespace xlmeta::ad {

// Named model parameters with deterministic (sorted-by-name) iteration.
struct ParamSet {
    std::map<std::string, Tensor> values;

    ParamSet clone() const { return *this; }

    friend bool operator==(const ParamSet& a, const ParamSet& b) {
        return a.values == b.values;
    }
};

using GradMap = std::map<std::string, Tensor>;

// Functional update: theta' = theta - lr * g. The source set is untouched.
ParamSet sgd_step(const ParamSet& params, const GradMap& grads, double lr);

// Flat binary checkpoint; round-trips bit-exactly.
void save_checkpoint(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace xlmeta::ad
