#pragma once

#include "emm/tree.hpp"

#include <random>
#include <string>

namespace emm::testing {

/// root -> two children with transition probabilities (p1, p2), horizon 1.
inline RawTree coin_raw(double p1, double p2, int dimension = 1) {
    RawTree raw;
    raw.dimension = dimension;
    raw.horizon = 1;
    raw.nodes.push_back({"root", std::nullopt, 1.0, {}});
    raw.nodes.push_back({"a", "root", p1, {}});
    raw.nodes.push_back({"b", "root", p2, {}});
    return raw;
}

inline ScenarioTree coin_tree(double p1 = 0.5, double p2 = 0.5) {
    return ScenarioTree::validate(coin_raw(p1, p2));
}

/// Two periods: (0.5, 0.5) at the root, (1/3, 2/3) below each child.
inline ScenarioTree two_period_tree() {
    RawTree raw;
    raw.dimension = 1;
    raw.horizon = 2;
    raw.nodes.push_back({"root", std::nullopt, 1.0, {}});
    for (std::string c : {"a", "b"}) {
        raw.nodes.push_back({c, "root", 0.5, {}});
        raw.nodes.push_back({c + "1", c, 1.0 / 3.0, {}});
        raw.nodes.push_back({c + "2", c, 2.0 / 3.0, {}});
    }
    return ScenarioTree::validate(raw);
}

/// Random tree with uniform branching and dirichlet-ish probabilities.
inline ScenarioTree random_tree(std::mt19937_64& rng, int branching, int horizon) {
    std::uniform_real_distribution<double> uprob(0.5, 1.5);
    RawTree raw;
    raw.dimension = 1;
    raw.horizon = horizon;
    raw.nodes.push_back({"n0", std::nullopt, 1.0, {}});
    std::vector<std::string> level{"n0"};
    int next = 1;
    for (int t = 1; t <= horizon; ++t) {
        std::vector<std::string> nxt;
        for (const auto& parent : level) {
            std::vector<double> q(branching);
            double sum = 0.0;
            for (double& v : q) sum += v = uprob(rng);
            for (int j = 0; j < branching; ++j) {
                std::string id = "n" + std::to_string(next++);
                raw.nodes.push_back({id, parent, q[j] / sum, {}});
                nxt.push_back(id);
            }
        }
        level = std::move(nxt);
    }
    return ScenarioTree::validate(raw);
}

}  // namespace emm::testing
