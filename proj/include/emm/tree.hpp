#pragma once

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace emm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Validation failure for tree inputs, densities and processes.
/// `code` is machine readable (e.g. "ChildrenSumNotOne"), `node` names
/// the offending node where applicable.
struct TreeError : std::runtime_error {
    std::string code;
    std::string node;
    TreeError(std::string code_, std::string node_, const std::string& what_)
        : std::runtime_error(what_), code(std::move(code_)), node(std::move(node_)) {}
};

struct RawNode {
    std::string id;
    std::optional<std::string> parent;  // empty for the root
    double prob = 1.0;                  // conditional transition probability
    std::vector<double> state;          // optional inline adapted-process value
};

struct RawTree {
    int dimension = 1;
    int horizon = 0;
    std::vector<RawNode> nodes;  // parent-before-child order
};

class DensityProcess;

/// Finite filtered probability space as a rooted tree. Atoms of the time-t
/// sigma algebra are the depth-t nodes; probabilities are stored as
/// conditional transition probabilities and renormalized exactly per atom
/// during validation. Immutable after construction.
class ScenarioTree {
  public:
    struct Node {
        std::string id;
        int parent = -1;  // index, -1 for the root
        int time = 0;
        double prob = 1.0;
        std::vector<int> children;
    };

    /// Validates a raw description and builds the tree.
    /// Throws TreeError with codes NonPositiveProbability, ChildrenSumNotOne,
    /// RaggedLeaves, OrphanNode, MultipleRoots, DuplicateNode.
    static ScenarioTree validate(const RawTree& raw);

    int node_count() const { return static_cast<int>(nodes_.size()); }
    int horizon() const { return horizon_; }
    int dimension() const { return dimension_; }
    const Node& node(int i) const { return nodes_[i]; }
    int index_of(const std::string& id) const;
    bool is_leaf(int i) const { return nodes_[i].children.empty(); }

    /// Node indices at depth t, in input order.
    const std::vector<int>& nodes_at(int t) const;
    const std::vector<int>& leaves() const { return by_time_[horizon_]; }

    /// Absolute probability of every node (product of trans_prob along the path).
    Vector node_measure() const;

    /// Leaf id -> absolute probability; sums to one.
    std::vector<std::pair<std::string, double>> leaf_measure() const;

    /// New tree with trans_prob'(c) = trans_prob(c) * Z(c) / Z(parent(c)).
    ScenarioTree reweighted(const DensityProcess& z) const;

  private:
    ScenarioTree() = default;
    std::vector<Node> nodes_;
    std::vector<std::vector<int>> by_time_;
    std::unordered_map<std::string, int> index_;
    int horizon_ = 0;
    int dimension_ = 1;
};

/// A d-vector value per tree node. Values must be finite.
class AdaptedProcess {
  public:
    AdaptedProcess(const ScenarioTree& tree, Matrix values);
    /// Scalar process convenience (d must be 1).
    AdaptedProcess(const ScenarioTree& tree, Vector values);

    int dimension() const { return static_cast<int>(values_.cols()); }
    Eigen::RowVectorXd value(int node) const { return values_.row(node); }
    double scalar(int node) const { return values_(node, 0); }
    const Matrix& values() const { return values_; }

  private:
    Matrix values_;
};

/// A positive scalar per node with Z(root) = 1 and the one-step martingale
/// identity sum_children p * Z(child) = Z(node) within 1e-10.
class DensityProcess {
  public:
    DensityProcess(const ScenarioTree& tree, Vector z);
    double operator[](int node) const { return z_[node]; }
    const Vector& values() const { return z_; }

  private:
    Vector z_;
};

/// Marked nodes are first hits; unmarked paths mean "never" (the infinite
/// sentinel). No marked node may be an ancestor of another.
class StoppingTime {
  public:
    static StoppingTime from_marks(const ScenarioTree& tree, const std::vector<std::string>& ids);
    static StoppingTime from_mark_indices(const ScenarioTree& tree, const std::vector<int>& idx);
    static StoppingTime never(const ScenarioTree& tree);

    bool marked(int node) const { return marked_[node] != 0; }
    /// True if the path to `node` hits a mark at time <= time(node).
    bool stopped_at_or_before(const ScenarioTree& tree, int node) const;
    /// Probability mass of paths with tau <= horizon.
    double stopped_mass(const ScenarioTree& tree) const;

  private:
    std::vector<char> marked_;
};

/// E[X_{t+1} | F_t]: one weighted sum per time-t atom, rows aligned with
/// tree.nodes_at(t). Throws TreeError("TimeOutOfRange") if t+1 > horizon.
Matrix cond_expectation(const ScenarioTree& tree, const AdaptedProcess& X, int t);

/// E[X_{t+1} ^ k | F_t] for scalar X >= 0. Throws NegativeInput / TimeOutOfRange.
Vector cond_expectation_truncated(const ScenarioTree& tree, const AdaptedProcess& X, int t, double k);

struct TotalVariation {
    double l1 = 0.0;            // E_P |Z - 1|
    double positive_part = 0.0; // 2 E_P (Z - 1)^+
};

/// Both total-variation formulas for a terminal density given on the leaves
/// (aligned with tree.leaves()). Throws TreeError("MeanNotOne") when the
/// leaf density does not have P-mean one within 1e-10.
TotalVariation total_variation(const ScenarioTree& tree, const Vector& leaf_density);

/// S stopped at tau: frozen at the marked ancestor where one exists.
AdaptedProcess stopped_process(const ScenarioTree& tree, const AdaptedProcess& S, const StoppingTime& tau);

}  // namespace emm
