#pragma once

#include "emm/tree.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace emm {

/// Construction failure in the one-step density machinery.
/// Codes: NoFeasibleK, BoundaryMinimizer, MaxIterations, BadProblem.
struct ConstructionError : std::runtime_error {
    std::string code;
    std::string atom;
    ConstructionError(std::string code_, std::string atom_, const std::string& what_)
        : std::runtime_error(what_), code(std::move(code_)), atom(std::move(atom_)) {}
};

/// One conditional atom: children probabilities q_j, increment values w_j
/// with conditional mean zero, and log-domain moment targets y_j.
struct OneStepProblem {
    std::string atom_id;
    Vector q;      // m, positive, sums to one
    Matrix w;      // m x d increments
    Vector log_y;  // m, log of the nonnegative moment target per child

    int children() const { return static_cast<int>(q.size()); }
    int dimension() const { return static_cast<int>(w.cols()); }
    double max_abs_w() const { return w.size() ? w.cwiseAbs().maxCoeff() : 0.0; }
    /// Throws ConstructionError("BadProblem") on violated invariants.
    void check(double tol_mart = 1e-10) const;
};

/// Strictly convex barrier f(a) = a (1 + (eps/pi)(arctan a - pi/2)) with
/// f(0) = 0 and f' trapped in (1-eps, 1).
struct ConvexBarrier {
    double eps;
    double f(double a) const;
    double df(double a) const;
    double ddf(double a) const;
};

/// Maximal orthogonal projection R with R w_j = 0: identity minus the
/// projector onto span{w_j}, span determined by SVD with relative rank
/// tolerance rank_tol.
Matrix predictable_range(const OneStepProblem& p, double rank_tol = 1e-12);

/// h(u) = sum_j q_j f(alpha_j w_j . u) + |R u|^2 / 2.
double field_eval(const OneStepProblem& p, const Matrix& R, const ConvexBarrier& f,
                  const Vector& alpha, const Vector& u);
Vector field_grad(const OneStepProblem& p, const Matrix& R, const ConvexBarrier& f,
                  const Vector& alpha, const Vector& u);
/// sup over the unit ball of |grad h| (crude bound, used by the net oracle).
double field_grad_bound(const OneStepProblem& p, const ConvexBarrier& f, const Vector& alpha);

struct MinimizeResult {
    Vector u;
    double grad_norm = 0.0;  // projected-gradient residual at u
    bool interior = false;   // |u| < 1 with plain gradient below tolerance
    int iterations = 0;
};

/// Minimizes h over the closed unit ball (projected gradient with Newton
/// refinement in the interior). Throws ConstructionError("MaxIterations").
MinimizeResult minimize_field_gradient(const OneStepProblem& p, const Matrix& R,
                                       const ConvexBarrier& f, const Vector& alpha,
                                       double tol_grad, int max_iter = 20000);

struct NetMinimizeResult {
    Vector u;
    double value = 0.0;
    double lipschitz = 0.0;  // gradient sup-bound used for the ball-minimum slack
};

/// Net-recursion minimizer: at level n picks the first lattice point whose
/// 2^-n ball attains the running global minimum and stays within
/// 2^-(n-1) + 2^-n of the previous pick. Test oracle only; d <= 3.
NetMinimizeResult minimize_field_net(const OneStepProblem& p, const Matrix& R,
                                     const ConvexBarrier& f, const Vector& alpha, int n_max);

struct V1dResult {
    Vector v;
    double ratio = 1.0;  // C = E[alpha W^+] / E[alpha W^-], 0/0 := 1
    bool exact = false;  // C within [1-eps, 1/(1-eps)]: weighted-mean identity exact
};

/// Closed-form one-dimensional construction.
V1dResult construct_V_1d(const OneStepProblem& p, double eps_f, const Vector& alpha);

struct VndResult {
    Vector v;
    Vector u;
    double residual = 0.0;  // |sum_j q_j V_j alpha_j w_j|
    bool interior = false;
};

/// General construction V_j = f'(alpha_j w_j . U) at the field minimizer.
VndResult construct_V_nd(const OneStepProblem& p, double eps_f, const Vector& alpha,
                         double tol_grad);

/// log alpha_j: 0 where y_j <= k, -log y_j otherwise (log-domain compare).
Vector alpha_log_from_k(const OneStepProblem& p, double log_k);

struct OneStepDensity {
    Vector z;
    Vector log_z;
    Vector log_alpha;
    double log_K = 0.0;
    int k_index = -1;       // position in the supplied grid
    double residual = 0.0;  // |sum q_j z_j w_j|
    double sup_z = 1.0;
    double inf_z = 1.0;
    double log_mean_zy = 0.0;  // log sum q_j z_j y_j
    double mass_truncated = 0.0;
    bool used_gradient = false;
};

/// The one-step density z = V_K alpha_K / E[V_K alpha_K]: scans the log-k
/// grid for the smallest feasible K. eps is the per-call tolerance; the
/// barrier parameter is 1 - 1/(1 + eps/2). Throws NoFeasibleK when the grid
/// is exhausted.
OneStepDensity lemma_L1a(const OneStepProblem& p, double eps,
                         const std::vector<double>& log_k_grid, double tol_z,
                         double tol_grad = 1e-11);

/// Geometric grid {2^0, ..., 2^max_exp} in log-domain.
std::vector<double> default_log_k_grid(int max_exp);

}  // namespace emm
