#pragma once

#include "emm/tree.hpp"

#include <cstdint>
#include <string>

namespace emm {

struct GeneratorSpec {
    int branching = 2;   // >= 2
    int horizon = 1;     // >= 1
    int dimension = 1;   // >= 1
    double scale = 1.0;
    double heavy_tail = 0.0;  // power-law exponent; 0 disables
    std::uint64_t seed = 0;
};

struct GeneratorMetadata {
    std::string prng = "mt19937_64";
    std::uint64_t seed = 0;
    bool heavy_tail = false;
    double max_over_median_abs_w = 0.0;
};

struct GeneratedInstance {
    RawTree raw;  // state carries the random martingale S
    GeneratorMetadata meta;
};

/// Random tree with per-atom recentered increments: every conditional mean
/// of S is zero to within a few machine epsilons of the increment scale.
/// Deterministic under the seed. Throws TreeError("BadGeneratorSpec").
GeneratedInstance generate_tree(const GeneratorSpec& spec);

}  // namespace emm
