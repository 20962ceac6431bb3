#pragma once

#include "emm/tree.hpp"

#include <vector>

namespace emm {

inline constexpr double kDefaultMartingaleTol = 1e-10;
inline constexpr double kDefaultExhaustionDelta = 1e-3;

/// Per-atom one-step residuals E[S_{t+1}|F_t] - S_t plus per-time norms.
struct MartingaleReport {
    struct AtomResidual {
        int node = -1;  // the time-t atom
        int time = 0;
        Vector residual;  // in R^d
    };
    std::vector<AtomResidual> residuals;
    std::vector<double> l1_norm;          // E[|S_t|] per t (Euclidean norm)
    std::vector<double> log_exp_moment;   // log E[e^{|S_t|}] per t
    std::vector<double> cond_abs_max;     // max_g E[|S_{t+1}| | F_t](g) per t
    double max_residual_inf = 0.0;
    double scale = 1.0;  // 1 + max |dS|
    double tol = kDefaultMartingaleTol;
    bool is_martingale = false;
};

MartingaleReport martingale_residuals(const ScenarioTree& tree, const AdaptedProcess& S,
                                      double tol_mart = kDefaultMartingaleTol);

/// Same verdict computed through the truncated-limit route E[S^+ ^ k] - E[S^- ^ k]
/// at k = max|S|; asserts agreement with the direct residuals to 1e-12.
MartingaleReport generalized_martingale_check(const ScenarioTree& tree, const AdaptedProcess& S,
                                              double tol_mart = kDefaultMartingaleTol);

struct LocalizationReport {
    struct Stage {
        double max_residual_inf = 0.0;
        double stopped_mass = 0.0;  // P[tau_n <= horizon]
        bool martingale = false;
    };
    std::vector<Stage> stages;
    bool residuals_pass = false;
    bool exhaustion_pass = false;  // last stage mass < delta, masses nonincreasing
    bool passes = false;
    int first_failing_stage = -1;
};

/// Checks that each S^{tau_n} 1{tau_n > 0} is a martingale and that the
/// stopped mass shrinks below delta along the sequence.
LocalizationReport verify_localization(const ScenarioTree& tree, const AdaptedProcess& S,
                                       const std::vector<StoppingTime>& taus,
                                       double tol_mart = kDefaultMartingaleTol,
                                       double delta = kDefaultExhaustionDelta);

struct Proposition1Report {
    LocalizationReport localization;
    MartingaleReport generalized;
    bool passes = false;
};

/// Local martingale (with the supplied localization) implies generalized martingale.
Proposition1Report proposition1_check(const ScenarioTree& tree, const AdaptedProcess& S,
                                      const std::vector<StoppingTime>& taus,
                                      double tol_mart = kDefaultMartingaleTol,
                                      double delta = kDefaultExhaustionDelta);

/// log E[e^{|S_t|}] over the time-t atoms, by log-sum-exp.
double exponential_moment(const ScenarioTree& tree, const AdaptedProcess& S, int t);

}  // namespace emm
