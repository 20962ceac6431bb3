#pragma once

#include "emm/pipeline.hpp"
#include "emm/tree.hpp"

#include <vector>

namespace emm {

/// Two-period lattice: U uniform on the N midpoints (i - 1/2)/N at time 1,
/// an independent fair sign theta at time 2. S jumps by theta/U at time 2;
/// the two-jump variant adds sign(U - 1/2) at time 1.
struct ExampleSpec {
    enum Variant { one_jump, two_jump };
    Variant variant = one_jump;
    int N = 2;           // even, >= 2
    double eps = 0.5;    // parameter of the capped density Zhat
};

struct ExampleInstance {
    ScenarioTree tree;
    AdaptedProcess S;          // one- or two-jump per spec.variant
    DensityProcess Z;          // 1, 2u, 2u
    DensityProcess Zhat;       // (u ^ eps) / (eps - eps^2/2), mean-normalized
    std::vector<double> u;     // the time-1 atom values
};

/// Throws TreeError("InvalidGrid") unless N is even and >= 2.
ExampleInstance build_example_tree(const ExampleSpec& spec);

/// The concrete quantities of the example on the discretized lattice,
/// alongside their closed-form limits.
struct ExampleOracles {
    double ez_abs_s_t2 = 0.0;   // E[Z_2 |S_2|], exactly 2
    double ez2_s2 = 0.0;        // E[Z_2 S_2], exactly 0 by sign symmetry
    double ez1_sprime1 = 0.0;   // E[Z_1 S'_1] -> 1/2 at rate O(1/N)
    double e_abs_s2 = 0.0;      // E[|S_2|], grows like log N
    double limit_ez_abs_s = 2.0;
    double limit_ez1_sprime1 = 0.5;
};

ExampleOracles analytic_oracles(const ExampleSpec& spec);

/// tau_n: stop at time 1 on atoms with 1/u > n, never elsewhere.
StoppingTime localization_sequence(const ExampleInstance& ex, int n);

struct SweepRow {
    int N = 0;
    double log_ep_exp = 0.0;  // log E_P e^{|S_2|}
    double log_eq_exp = 0.0;  // log E_Q e^{|S_2|}
    double eq_abs_s2 = 0.0;   // E_Q |S_2|
    double tv_l1 = 0.0;
    double sup_Z = 1.0;
};

/// Runs the full construction per grid size and tabulates the exponential
/// moments before and after the measure change.
std::vector<SweepRow> divergence_sweep(ExampleSpec::Variant variant, const std::vector<int>& Ns,
                                       double eps, const ConstructionOptions& opts = {});

}  // namespace emm
