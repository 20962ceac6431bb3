#include "emm/generate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace emm {

GeneratedInstance generate_tree(const GeneratorSpec& spec) {
    if (spec.branching < 2 || spec.horizon < 1 || spec.dimension < 1 || !(spec.scale > 0.0))
        throw TreeError("BadGeneratorSpec", "", "need branching >= 2, horizon >= 1, dimension >= 1");
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uprob(0.5, 1.5);
    std::normal_distribution<double> gauss(0.0, spec.scale);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    GeneratedInstance out;
    out.meta.seed = spec.seed;
    out.meta.heavy_tail = spec.heavy_tail > 0.0;
    RawTree& raw = out.raw;
    raw.dimension = spec.dimension;
    raw.horizon = spec.horizon;
    raw.nodes.push_back({"n0", std::nullopt, 1.0, std::vector<double>(spec.dimension, 0.0)});

    std::vector<double> abs_w;
    std::vector<size_t> level{0};  // indices into raw.nodes at the current depth
    int next_id = 1;
    for (int t = 1; t <= spec.horizon; ++t) {
        std::vector<size_t> next_level;
        for (size_t gi : level) {
            const int b = spec.branching;
            std::vector<double> q(b);
            double qsum = 0.0;
            for (double& v : q) qsum += v = uprob(rng);
            for (double& v : q) v /= qsum;
            // draw increments, then recenter so the conditional mean is zero
            Matrix w(b, spec.dimension);
            for (int j = 0; j < b; ++j)
                for (int k = 0; k < spec.dimension; ++k) {
                    double x = gauss(rng);
                    if (spec.heavy_tail > 0.0)
                        x = (x < 0 ? -1.0 : 1.0) * spec.scale *
                            std::pow(1.0 - unit(rng), -1.0 / spec.heavy_tail);
                    w(j, k) = x;
                }
            Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(spec.dimension);
            for (int j = 0; j < b; ++j) mean += q[j] * w.row(j);
            for (int j = 0; j < b; ++j) w.row(j) -= mean;
            const std::string parent_id = raw.nodes[gi].id;
            const std::vector<double>& ps = raw.nodes[gi].state;
            for (int j = 0; j < b; ++j) {
                RawNode node;
                node.id = "n" + std::to_string(next_id++);
                node.parent = parent_id;
                node.prob = q[j];
                node.state.resize(spec.dimension);
                for (int k = 0; k < spec.dimension; ++k) {
                    node.state[k] = ps[k] + w(j, k);
                    abs_w.push_back(std::abs(w(j, k)));
                }
                next_level.push_back(raw.nodes.size());
                raw.nodes.push_back(std::move(node));
            }
        }
        level = std::move(next_level);
    }

    std::sort(abs_w.begin(), abs_w.end());
    const double median = abs_w[abs_w.size() / 2];
    out.meta.max_over_median_abs_w = median > 0.0 ? abs_w.back() / median : 0.0;
    return out;
}

}  // namespace emm
