#include "emm/tree.hpp"

#include <algorithm>
#include <cmath>

namespace emm {

namespace {
constexpr double kProbSumTol = 1e-12;
constexpr double kDensityTol = 1e-10;
}  // namespace

ScenarioTree ScenarioTree::validate(const RawTree& raw) {
    ScenarioTree tree;
    tree.dimension_ = raw.dimension;
    tree.horizon_ = raw.horizon;
    if (raw.dimension < 1) throw TreeError("BadDimension", "", "dimension must be >= 1");
    if (raw.horizon < 0) throw TreeError("BadHorizon", "", "horizon must be >= 0");
    if (raw.nodes.empty()) throw TreeError("OrphanNode", "", "tree has no nodes");

    tree.nodes_.reserve(raw.nodes.size());
    int root_count = 0;
    for (const auto& rn : raw.nodes) {
        if (tree.index_.count(rn.id))
            throw TreeError("DuplicateNode", rn.id, "duplicate node id " + rn.id);
        Node n;
        n.id = rn.id;
        n.prob = rn.prob;
        if (rn.parent) {
            auto it = tree.index_.find(*rn.parent);
            if (it == tree.index_.end())
                throw TreeError("OrphanNode", rn.id,
                                "node " + rn.id + " references unknown parent " + *rn.parent);
            n.parent = it->second;
            n.time = tree.nodes_[n.parent].time + 1;
            if (!(rn.prob > 0.0) || !std::isfinite(rn.prob))
                throw TreeError("NonPositiveProbability", rn.id,
                                "node " + rn.id + " has trans_prob <= 0");
        } else {
            ++root_count;
            if (root_count > 1)
                throw TreeError("MultipleRoots", rn.id, "second root " + rn.id);
            n.parent = -1;
            n.time = 0;
            n.prob = 1.0;
        }
        int idx = static_cast<int>(tree.nodes_.size());
        tree.index_.emplace(n.id, idx);
        if (n.parent >= 0) tree.nodes_[n.parent].children.push_back(idx);
        tree.nodes_.push_back(std::move(n));
    }
    if (root_count == 0) throw TreeError("OrphanNode", raw.nodes.front().id, "no root node");

    // children probabilities must sum to one per atom; renormalize exactly
    for (int i = 0; i < tree.node_count(); ++i) {
        const auto& kids = tree.nodes_[i].children;
        if (kids.empty()) continue;
        double sum = 0.0;
        for (int c : kids) sum += tree.nodes_[c].prob;
        if (std::abs(sum - 1.0) > kProbSumTol)
            throw TreeError("ChildrenSumNotOne", tree.nodes_[i].id,
                            "children of " + tree.nodes_[i].id + " sum to " + std::to_string(sum));
        for (int c : kids) tree.nodes_[c].prob /= sum;
        double head = 0.0;
        for (size_t j = 0; j + 1 < kids.size(); ++j) head += tree.nodes_[kids[j]].prob;
        tree.nodes_[kids.back()].prob = 1.0 - head;  // exact unit sum
    }

    // leaves must sit at uniform depth == horizon
    for (int i = 0; i < tree.node_count(); ++i) {
        if (tree.nodes_[i].children.empty() && tree.nodes_[i].time != tree.horizon_)
            throw TreeError("RaggedLeaves", tree.nodes_[i].id,
                            "leaf " + tree.nodes_[i].id + " at depth " +
                                std::to_string(tree.nodes_[i].time) + ", horizon is " +
                                std::to_string(tree.horizon_));
        if (tree.nodes_[i].time > tree.horizon_)
            throw TreeError("RaggedLeaves", tree.nodes_[i].id, "node deeper than horizon");
    }

    tree.by_time_.assign(tree.horizon_ + 1, {});
    for (int i = 0; i < tree.node_count(); ++i) tree.by_time_[tree.nodes_[i].time].push_back(i);
    return tree;
}

int ScenarioTree::index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw TreeError("UnknownNode", id, "unknown node id " + id);
    return it->second;
}

const std::vector<int>& ScenarioTree::nodes_at(int t) const {
    if (t < 0 || t > horizon_)
        throw TreeError("TimeOutOfRange", "", "time " + std::to_string(t) + " out of range");
    return by_time_[t];
}

Vector ScenarioTree::node_measure() const {
    Vector p(node_count());
    for (int i = 0; i < node_count(); ++i)
        p[i] = nodes_[i].parent < 0 ? 1.0 : p[nodes_[i].parent] * nodes_[i].prob;
    return p;
}

std::vector<std::pair<std::string, double>> ScenarioTree::leaf_measure() const {
    Vector p = node_measure();
    std::vector<std::pair<std::string, double>> out;
    out.reserve(leaves().size());
    for (int i : leaves()) out.emplace_back(nodes_[i].id, p[i]);
    return out;
}

ScenarioTree ScenarioTree::reweighted(const DensityProcess& z) const {
    ScenarioTree out = *this;
    for (int i = 0; i < node_count(); ++i) {
        int par = nodes_[i].parent;
        if (par < 0) continue;
        double p = nodes_[i].prob * z[i] / z[par];
        if (!(p > 0.0) || !std::isfinite(p))
            throw TreeError("InvalidDensity", nodes_[i].id, "reweighted prob not positive finite");
        out.nodes_[i].prob = p;
    }
    // re-normalize exactly so the output satisfies the tree invariants
    for (int i = 0; i < node_count(); ++i) {
        const auto& kids = out.nodes_[i].children;
        if (kids.empty()) continue;
        double sum = 0.0;
        for (int c : kids) sum += out.nodes_[c].prob;
        if (std::abs(sum - 1.0) > 1e-9)
            throw TreeError("InvalidDensity", nodes_[i].id, "density breaks probability sum");
        for (int c : kids) out.nodes_[c].prob /= sum;
        double head = 0.0;
        for (size_t j = 0; j + 1 < kids.size(); ++j) head += out.nodes_[kids[j]].prob;
        out.nodes_[kids.back()].prob = 1.0 - head;
    }
    return out;
}

AdaptedProcess::AdaptedProcess(const ScenarioTree& tree, Matrix values) : values_(std::move(values)) {
    if (values_.rows() != tree.node_count() || values_.cols() < 1)
        throw TreeError("BadProcessShape", "", "process needs one row per node");
    if (!values_.allFinite()) throw TreeError("NonFiniteValue", "", "process has non-finite values");
}

AdaptedProcess::AdaptedProcess(const ScenarioTree& tree, Vector values)
    : AdaptedProcess(tree, Matrix(std::move(values))) {}

DensityProcess::DensityProcess(const ScenarioTree& tree, Vector z) : z_(std::move(z)) {
    if (z_.size() != tree.node_count())
        throw TreeError("InvalidDensity", "", "density must have one value per node");
    if (std::abs(z_[0] - 1.0) > kDensityTol)
        throw TreeError("InvalidDensity", tree.node(0).id, "Z(root) != 1");
    for (int i = 0; i < tree.node_count(); ++i) {
        if (!(z_[i] > 0.0) || !std::isfinite(z_[i]))
            throw TreeError("InvalidDensity", tree.node(i).id, "Z must be positive finite");
        const auto& kids = tree.node(i).children;
        if (kids.empty()) continue;
        double mean = 0.0;
        for (int c : kids) mean += tree.node(c).prob * z_[c];
        if (std::abs(mean - z_[i]) > kDensityTol * std::max(1.0, z_[i]))
            throw TreeError("InvalidDensity", tree.node(i).id,
                            "Z lacks the one-step martingale property at " + tree.node(i).id);
    }
}

StoppingTime StoppingTime::from_mark_indices(const ScenarioTree& tree, const std::vector<int>& idx) {
    StoppingTime tau;
    tau.marked_.assign(tree.node_count(), 0);
    for (int i : idx) tau.marked_[i] = 1;
    // adaptedness: no mark strictly below another mark
    for (int i = 0; i < tree.node_count(); ++i) {
        if (!tau.marked_[i]) continue;
        for (int a = tree.node(i).parent; a >= 0; a = tree.node(a).parent)
            if (tau.marked_[a])
                throw TreeError("NestedMarks", tree.node(i).id,
                                "mark at " + tree.node(i).id + " below mark at " + tree.node(a).id);
    }
    return tau;
}

StoppingTime StoppingTime::from_marks(const ScenarioTree& tree, const std::vector<std::string>& ids) {
    std::vector<int> idx;
    idx.reserve(ids.size());
    for (const auto& id : ids) idx.push_back(tree.index_of(id));
    return from_mark_indices(tree, idx);
}

StoppingTime StoppingTime::never(const ScenarioTree& tree) {
    return from_mark_indices(tree, {});
}

bool StoppingTime::stopped_at_or_before(const ScenarioTree& tree, int node) const {
    for (int a = node; a >= 0; a = tree.node(a).parent)
        if (marked_[a]) return true;
    return false;
}

double StoppingTime::stopped_mass(const ScenarioTree& tree) const {
    Vector p = tree.node_measure();
    double mass = 0.0;
    for (int i = 0; i < tree.node_count(); ++i)
        if (marked_[i]) mass += p[i];
    return mass;
}

Matrix cond_expectation(const ScenarioTree& tree, const AdaptedProcess& X, int t) {
    if (t < 0 || t + 1 > tree.horizon())
        throw TreeError("TimeOutOfRange", "", "cond_expectation needs 0 <= t < horizon");
    const auto& atoms = tree.nodes_at(t);
    Matrix out(atoms.size(), X.dimension());
    for (size_t g = 0; g < atoms.size(); ++g) {
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(X.dimension());
        for (int c : tree.node(atoms[g]).children) acc += tree.node(c).prob * X.value(c);
        out.row(g) = acc;
    }
    return out;
}

Vector cond_expectation_truncated(const ScenarioTree& tree, const AdaptedProcess& X, int t, double k) {
    if (X.dimension() != 1) throw TreeError("BadProcessShape", "", "truncated expectation is scalar");
    if (t < 0 || t + 1 > tree.horizon())
        throw TreeError("TimeOutOfRange", "", "cond_expectation_truncated needs 0 <= t < horizon");
    if (k < 0.0) throw TreeError("NegativeInput", "", "truncation level k must be >= 0");
    const auto& atoms = tree.nodes_at(t);
    Vector out(atoms.size());
    for (size_t g = 0; g < atoms.size(); ++g) {
        double acc = 0.0;
        for (int c : tree.node(atoms[g]).children) {
            double x = X.scalar(c);
            if (x < 0.0)
                throw TreeError("NegativeInput", tree.node(c).id, "X must be nonnegative");
            acc += tree.node(c).prob * std::min(x, k);
        }
        out[g] = acc;
    }
    return out;
}

TotalVariation total_variation(const ScenarioTree& tree, const Vector& leaf_density) {
    const auto& leaves = tree.leaves();
    if (leaf_density.size() != static_cast<Eigen::Index>(leaves.size()))
        throw TreeError("InvalidDensity", "", "leaf density must align with tree.leaves()");
    Vector p = tree.node_measure();
    double mean = 0.0;
    for (size_t i = 0; i < leaves.size(); ++i) {
        if (!(leaf_density[i] > 0.0))
            throw TreeError("InvalidDensity", tree.node(leaves[i]).id, "leaf density not positive");
        mean += p[leaves[i]] * leaf_density[i];
    }
    if (std::abs(mean - 1.0) > kDensityTol)
        throw TreeError("MeanNotOne", "", "leaf density has P-mean " + std::to_string(mean));
    TotalVariation tv;
    for (size_t i = 0; i < leaves.size(); ++i) {
        double d = leaf_density[i] - 1.0;
        tv.l1 += p[leaves[i]] * std::abs(d);
        tv.positive_part += 2.0 * p[leaves[i]] * std::max(d, 0.0);
    }
    return tv;
}

AdaptedProcess stopped_process(const ScenarioTree& tree, const AdaptedProcess& S, const StoppingTime& tau) {
    Matrix out = S.values();
    // nodes are parent-before-child, so the frozen value propagates in one pass
    std::vector<int> frozen_at(tree.node_count(), -1);
    for (int i = 0; i < tree.node_count(); ++i) {
        int par = tree.node(i).parent;
        if (par >= 0 && frozen_at[par] >= 0)
            frozen_at[i] = frozen_at[par];
        else if (tau.marked(i))
            frozen_at[i] = i;
        if (frozen_at[i] >= 0) out.row(i) = S.value(frozen_at[i]);
    }
    return AdaptedProcess(tree, std::move(out));
}

}  // namespace emm
