#include "emm/examples.hpp"

#include <cmath>
#include <string>

namespace emm {

namespace {

double sign_half(double u) { return u < 0.5 ? -1.0 : 1.0; }

}  // namespace

ExampleInstance build_example_tree(const ExampleSpec& spec) {
    if (spec.N < 2 || spec.N % 2 != 0)
        throw TreeError("InvalidGrid", "", "grid size must be even and >= 2");
    if (!(spec.eps > 0.0) || spec.eps >= 2.0)
        throw TreeError("InvalidGrid", "", "eps must lie in (0, 2)");
    const int N = spec.N;

    RawTree raw;
    raw.dimension = 1;
    raw.horizon = 2;
    raw.nodes.push_back({"root", std::nullopt, 1.0, {}});
    for (int i = 1; i <= N; ++i) {
        std::string uid = "u" + std::to_string(i);
        raw.nodes.push_back({uid, "root", 1.0 / N, {}});
        raw.nodes.push_back({uid + "+", uid, 0.5, {}});
        raw.nodes.push_back({uid + "-", uid, 0.5, {}});
    }
    ScenarioTree tree = ScenarioTree::validate(raw);

    std::vector<double> u(N);
    for (int i = 0; i < N; ++i) u[i] = (i + 0.5) / N;

    const double denom = spec.eps - spec.eps * spec.eps / 2.0;
    Vector S(tree.node_count()), Z(tree.node_count()), Zh(tree.node_count());
    S[0] = 0.0;
    Z[0] = 1.0;
    double zh_mean = 0.0;
    for (int i = 0; i < N; ++i) zh_mean += std::min(u[i], spec.eps) / denom / N;
    Zh[0] = 1.0;
    for (int i = 0; i < N; ++i) {
        int a = tree.index_of("u" + std::to_string(i + 1));
        double s1 = spec.variant == ExampleSpec::two_jump ? sign_half(u[i]) : 0.0;
        S[a] = s1;
        Z[a] = 2.0 * u[i];
        Zh[a] = std::min(u[i], spec.eps) / denom / zh_mean;
        for (double theta : {1.0, -1.0}) {
            int c = tree.index_of(tree.node(a).id + (theta > 0 ? "+" : "-"));
            S[c] = s1 + theta / u[i];
            Z[c] = Z[a];
            Zh[c] = Zh[a];
        }
    }
    return ExampleInstance{tree, AdaptedProcess(tree, S), DensityProcess(tree, Z),
                           DensityProcess(tree, Zh), std::move(u)};
}

ExampleOracles analytic_oracles(const ExampleSpec& spec) {
    ExampleSpec base = spec;
    base.variant = ExampleSpec::one_jump;
    ExampleInstance ex = build_example_tree(base);
    ExampleOracles o;
    for (double ui : ex.u) {
        const double p = 1.0 / spec.N;
        for (double theta : {1.0, -1.0}) {
            o.ez_abs_s_t2 += 0.5 * p * 2.0 * ui * std::abs(theta / ui);
            o.ez2_s2 += 0.5 * p * 2.0 * ui * (theta / ui);
        }
        o.ez1_sprime1 += p * 2.0 * ui * sign_half(ui);
        o.e_abs_s2 += p / ui;
    }
    return o;
}

StoppingTime localization_sequence(const ExampleInstance& ex, int n) {
    std::vector<int> marks;
    const auto& atoms = ex.tree.nodes_at(1);
    for (size_t i = 0; i < atoms.size(); ++i)
        if (1.0 / ex.u[i] > n) marks.push_back(atoms[i]);
    return marks.empty() ? StoppingTime::never(ex.tree)
                         : StoppingTime::from_mark_indices(ex.tree, marks);
}

std::vector<SweepRow> divergence_sweep(ExampleSpec::Variant variant, const std::vector<int>& Ns,
                                       double eps, const ConstructionOptions& opts) {
    std::vector<SweepRow> rows;
    for (int N : Ns) {
        ExampleSpec spec{variant, N, eps};
        ExampleInstance ex = build_example_tree(spec);
        ConstructionResult res = theorem1(ex.tree, ex.S, eps, opts);
        SweepRow row;
        row.N = N;
        row.log_ep_exp = res.report.log_exp_moment_p[2];
        row.log_eq_exp = res.report.log_exp_moment_q[2];
        row.eq_abs_s2 = res.report.moments_q[2][0];
        row.tv_l1 = res.report.tv.l1;
        row.sup_Z = res.report.sup_Z;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace emm
