#pragma once

#include "emm/martingale.hpp"
#include "emm/onestep.hpp"
#include "emm/tree.hpp"

#include <vector>

namespace emm {

/// Largest epsilon-tilde with (n+1)e <= eps, (1+e)^{n+1} <= 1+eps and
/// (1-e)^{n+1} >= 1-eps. Throws ConstructionError("NonPositiveEpsilon").
double epsilon_tilde(double eps, int n);

/// Next stage budget: min of the geometric log-headroom split and the
/// mass-transfer cap 2^-(n+1) / M_n, with n = history.size().
double epsilon_schedule_step(double eps, const std::vector<double>& history, double M_n);

struct ConstructionOptions {
    double tol_mart = 1e-10;  // relative to 1 + max |dS|
    double tol_z = 1e-10;     // relative to 1 + max |w|
    double tol_grad = 1e-11;
    int k_max_exp = 128;
    int p_max = 6;
};

struct StageRecord {
    int n = 0;
    double eps_n = 0.0;
    double eps_tilde = 0.0;
    double M_n = 1.0;  // max leaf dP/dQ^{(n-1)}
    double sup_Zn = 1.0;
    double inf_Zn = 1.0;
    double mass_below = 0.0;  // Q^{(n-1)}[Z^{(n)} < 1 - eps_n]
    double log_EQprime_Y = 0.0;
    double max_log_K = 0.0;
    int atoms_damped = 0;  // atoms where some alpha < 1
};

struct AtomDiagnostic {
    std::string atom_id;
    int stage = 0;
    int time = 0;
    double log_K = 0.0;
    double mass_truncated = 0.0;
    double sup_z = 1.0;
    double inf_z = 1.0;
    double residual = 0.0;
};

struct StageResult {
    Vector Z;        // Z^{(n)} per node (constant below time n along each path)
    Vector log_Z;    // same, log-domain
    StageRecord record;
    std::vector<AtomDiagnostic> atoms;
};

/// Backward induction of Lemma-style one-step densities: z_t for t = n..0
/// against the measure carried by `treeQ`, with Y given in log-domain on
/// the leaves. Throws ProbBoundViolated / NoFeasibleK (with atom id).
StageResult lemma_L2a(const ScenarioTree& treeQ, const AdaptedProcess& S, double eps, int n,
                      const Vector& leaf_log_Y, const ConstructionOptions& opts = {});

struct ConstructionReport {
    double epsilon = 0.0;
    std::vector<StageRecord> schedule;
    double sup_Z = 1.0;
    double inf_Z = 1.0;
    TotalVariation tv;
    double resid_before = 0.0;  // max atom residual of S under P
    double resid_after = 0.0;   // ... under the output measure
    double resid_scale = 1.0;   // 1 + max |dS|
    double density_resid = 0.0; // max P-martingale defect of Z
    double bc_series_max = 0.0; // max_leaf sum_n |1 - Z^{(n)}|
    double bc_series_mean = 0.0;
    std::vector<std::vector<double>> moments_q;  // [t][p-1] = E_Q |S_t|^p
    std::vector<double> log_exp_moment_p;        // log E_P e^{|S_t|} per t
    std::vector<double> log_exp_moment_q;        // log E_Q e^{|S_t|} per t
    std::vector<AtomDiagnostic> atoms;
    bool postconditions_pass = false;
};

struct ConstructionResult {
    Vector Z;          // terminal density per node (a P-martingale)
    ScenarioTree Q;    // reweighted tree
    ConstructionReport report;
};

/// Stage loop of the main construction: per n in 0..T computes eps^(n),
/// runs the backward induction with Y = e^{|S_n|} and rolls the measure
/// forward. Verifies every postcondition with the analysis operations.
ConstructionResult theorem1(const ScenarioTree& tree, const AdaptedProcess& S, double eps,
                            const ConstructionOptions& opts = {});

/// theorem1 with eps/2 plus the total-variation bound ||P - Q|| <= eps.
ConstructionResult corollary1(const ScenarioTree& tree, const AdaptedProcess& S, double eps,
                              const ConstructionOptions& opts = {});

}  // namespace emm
