#include "emm/pipeline.hpp"

#include "emm/logsumexp.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>

namespace emm {

double epsilon_tilde(double eps, int n) {
    if (!(eps > 0.0))
        throw ConstructionError("NonPositiveEpsilon", "", "epsilon must be positive");
    const double inv = 1.0 / (n + 1.0);
    double a = eps * inv;
    double b = std::pow(1.0 + eps, inv) - 1.0;
    double c = eps >= 1.0 ? 1.0 : 1.0 - std::pow(1.0 - eps, inv);
    double e = std::min({a, b, c});
    // the binding constraint holds with equality up to rounding
    if ((n + 1) * e > eps * (1.0 + 1e-14) ||
        (n + 1) * std::log1p(e) > std::log1p(eps) + 1e-14 ||
        (eps < 1.0 && (n + 1) * std::log1p(-e) < std::log1p(-eps) - 1e-14))
        throw ConstructionError("NonPositiveEpsilon", "", "epsilon_tilde violates its constraints");
    return e;
}

double epsilon_schedule_step(double eps, const std::vector<double>& history, double M_n) {
    const int n = static_cast<int>(history.size());
    double used = 0.0;
    for (double h : history) used += std::log1p(h);
    const double headroom = std::log1p(eps) - used;
    const double budget = std::expm1(std::ldexp(1.0, -(n + 1)) * headroom);
    const double cap = std::ldexp(1.0, -(n + 1)) / M_n;
    return std::min(budget, cap);
}

namespace {

Vector clamped_exp(const Vector& logs) {
    Vector out(logs.size());
    for (int i = 0; i < logs.size(); ++i) out[i] = std::max(std::exp(logs[i]), DBL_MIN);
    return out;
}

}  // namespace

StageResult lemma_L2a(const ScenarioTree& treeQ, const AdaptedProcess& S, double eps, int n,
                      const Vector& leaf_log_Y, const ConstructionOptions& opts) {
    const int T = treeQ.horizon();
    if (n < 0 || n > T)
        throw ConstructionError("BadProblem", "", "stage index out of range");
    MartingaleReport pre = martingale_residuals(treeQ, S, opts.tol_mart);
    if (!pre.is_martingale)
        throw ConstructionError("NotLocalMartingaleInput", "",
                                "S is not a martingale under the carried measure");

    const double eps_t = epsilon_tilde(eps, n);
    const std::vector<double> grid = default_log_k_grid(opts.k_max_exp);

    // log E_Q[Y prod_{i>t} z_i | F_t] per node, swept backward
    Vector log_G = Vector::Zero(treeQ.node_count());
    const auto& leaves = treeQ.leaves();
    if (leaf_log_Y.size() != static_cast<Eigen::Index>(leaves.size()))
        throw ConstructionError("BadProblem", "", "leaf_log_Y must align with tree.leaves()");
    for (size_t i = 0; i < leaves.size(); ++i) log_G[leaves[i]] = leaf_log_Y[i];
    for (int t = T - 1; t >= n; --t) {
        for (int g : treeQ.nodes_at(t)) {
            LogSumExp lse;
            for (int c : treeQ.node(g).children)
                lse.add(std::log(treeQ.node(c).prob) + log_G[c]);
            log_G[g] = lse.value();
        }
    }

    StageResult out;
    out.record.n = n;
    out.record.eps_n = eps;
    out.record.eps_tilde = eps_t;
    Vector log_z = Vector::Zero(treeQ.node_count());

    for (int t = n; t >= 1; --t) {
        for (int g : treeQ.nodes_at(t - 1)) {
            const auto& kids = treeQ.node(g).children;
            const int m = static_cast<int>(kids.size());
            OneStepProblem prob;
            prob.atom_id = treeQ.node(g).id;
            prob.q.resize(m);
            prob.w.resize(m, S.dimension());
            prob.log_y.resize(m);
            for (int j = 0; j < m; ++j) {
                prob.q[j] = treeQ.node(kids[j]).prob;
                prob.w.row(j) = S.value(kids[j]) - S.value(g);
                prob.log_y[j] = log_G[kids[j]];
            }
            OneStepDensity z = lemma_L1a(prob, eps_t, grid, opts.tol_z, opts.tol_grad);
            for (int j = 0; j < m; ++j) log_z[kids[j]] = z.log_z[j];

            AtomDiagnostic diag;
            diag.atom_id = prob.atom_id;
            diag.stage = n;
            diag.time = t - 1;
            diag.log_K = z.log_K;
            diag.mass_truncated = z.mass_truncated;
            diag.sup_z = z.sup_z;
            diag.inf_z = z.inf_z;
            diag.residual = z.residual;
            out.atoms.push_back(std::move(diag));
            out.record.max_log_K = std::max(out.record.max_log_K, z.log_K);
            if (z.log_alpha.minCoeff() < 0.0) ++out.record.atoms_damped;

            LogSumExp lse;
            for (int j = 0; j < m; ++j)
                lse.add(std::log(prob.q[j]) + z.log_z[j] + log_G[kids[j]]);
            log_G[g] = lse.value();
        }
    }
    // z_0 against the trivial pre-root sigma algebra is identically one

    out.log_Z = Vector::Zero(treeQ.node_count());
    for (int i = 1; i < treeQ.node_count(); ++i) {
        int par = treeQ.node(i).parent;
        out.log_Z[i] = out.log_Z[par] + (treeQ.node(i).time <= n ? log_z[i] : 0.0);
    }
    out.Z = clamped_exp(out.log_Z);
    out.record.sup_Zn = out.Z.maxCoeff();
    out.record.inf_Zn = out.Z.minCoeff();
    if (out.record.sup_Zn > 1.0 + eps + 1e-12)
        throw ConstructionError("BadProblem", "", "stage density exceeds 1+eps");

    Vector qmass = treeQ.node_measure();
    double mass_below = 0.0;
    for (size_t i = 0; i < leaves.size(); ++i)
        if (out.Z[leaves[i]] < 1.0 - eps) mass_below += qmass[leaves[i]];
    out.record.mass_below = mass_below;
    if (mass_below >= eps)
        throw ConstructionError("ProbBoundViolated", "",
                                "Q[Z^(n) < 1-eps] = " + std::to_string(mass_below));

    // E_{Q'}[Y] = E_Q[Z^{(n)} Y], reported in log-domain
    LogSumExp ey;
    for (size_t i = 0; i < leaves.size(); ++i)
        ey.add(std::log(qmass[leaves[i]]) + out.log_Z[leaves[i]] + leaf_log_Y[i]);
    out.record.log_EQprime_Y = ey.value();

    // S must stay a martingale under the reweighted measure
    ScenarioTree treeQp = treeQ.reweighted(DensityProcess(treeQ, out.Z));
    MartingaleReport post = martingale_residuals(treeQp, S, opts.tol_mart);
    if (!post.is_martingale)
        throw ConstructionError("BadProblem", "",
                                "stage density failed to restore the martingale property");
    return out;
}

namespace {

Vector leaf_log_Y_for_stage(const ScenarioTree& tree, const AdaptedProcess& S, int n) {
    const auto& leaves = tree.leaves();
    Vector out(leaves.size());
    for (size_t i = 0; i < leaves.size(); ++i) {
        int a = leaves[i];
        while (tree.node(a).time > n) a = tree.node(a).parent;
        out[i] = S.value(a).norm();  // log of Y = e^{|S_n|}
    }
    return out;
}

}  // namespace

ConstructionResult theorem1(const ScenarioTree& tree, const AdaptedProcess& S, double eps,
                            const ConstructionOptions& opts) {
    if (!(eps > 0.0))
        throw ConstructionError("NonPositiveEpsilon", "", "epsilon must be positive");
    MartingaleReport before = martingale_residuals(tree, S, opts.tol_mart);
    if (!before.is_martingale)
        throw ConstructionError("NotLocalMartingaleInput", "",
                                "input S is not a P-martingale on the tree");

    ConstructionResult res{Vector(), tree, {}};
    ConstructionReport& rep = res.report;
    rep.epsilon = eps;
    rep.resid_before = before.max_residual_inf;
    rep.resid_scale = before.scale;

    const Vector p_measure = tree.node_measure();
    const auto& leaves = tree.leaves();
    ScenarioTree current = tree;
    std::vector<double> history;
    Vector log_Z_total = Vector::Zero(tree.node_count());
    Vector bc_series = Vector::Zero(leaves.size());

    for (int n = 0; n <= tree.horizon(); ++n) {
        Vector q_measure = current.node_measure();
        double M_n = 0.0;
        for (int leaf : leaves) M_n = std::max(M_n, p_measure[leaf] / q_measure[leaf]);
        double eps_n = epsilon_schedule_step(eps, history, M_n);
        history.push_back(eps_n);

        StageResult stage = lemma_L2a(current, S, eps_n, n, leaf_log_Y_for_stage(tree, S, n), opts);
        stage.record.M_n = M_n;
        log_Z_total += stage.log_Z;
        for (size_t i = 0; i < leaves.size(); ++i)
            bc_series[i] += std::abs(1.0 - stage.Z[leaves[i]]);
        current = current.reweighted(DensityProcess(current, stage.Z));
        rep.schedule.push_back(stage.record);
        rep.atoms.insert(rep.atoms.end(), stage.atoms.begin(), stage.atoms.end());
    }

    res.Z = clamped_exp(log_Z_total);
    res.Q = current;
    rep.sup_Z = res.Z.maxCoeff();
    rep.inf_Z = res.Z.minCoeff();
    rep.bc_series_max = bc_series.size() ? bc_series.maxCoeff() : 0.0;
    rep.bc_series_mean = bc_series.size() ? bc_series.mean() : 0.0;

    // postconditions, re-verified through the independent analysis operations
    bool ok = rep.inf_Z > 0.0 && rep.sup_Z <= 1.0 + eps + 1e-12;
    DensityProcess Zproc(tree, res.Z);  // throws if Z is not a P-martingale density
    for (int i = 0; i < tree.node_count(); ++i) {
        const auto& kids = tree.node(i).children;
        if (kids.empty()) continue;
        double mean = 0.0;
        for (int c : kids) mean += tree.node(c).prob * res.Z[c];
        rep.density_resid = std::max(rep.density_resid, std::abs(mean - res.Z[i]));
    }
    MartingaleReport after = martingale_residuals(res.Q, S, opts.tol_mart);
    rep.resid_after = after.max_residual_inf;
    ok = ok && after.is_martingale;

    Vector leaf_Z(leaves.size());
    for (size_t i = 0; i < leaves.size(); ++i) leaf_Z[i] = res.Z[leaves[i]];
    rep.tv = total_variation(tree, leaf_Z);
    ok = ok && std::abs(rep.tv.l1 - rep.tv.positive_part) <= 1e-10;

    rep.log_exp_moment_p.resize(tree.horizon() + 1);
    rep.log_exp_moment_q.resize(tree.horizon() + 1);
    rep.moments_q.assign(tree.horizon() + 1, std::vector<double>(opts.p_max, 0.0));
    Vector q_measure = res.Q.node_measure();
    for (int t = 0; t <= tree.horizon(); ++t) {
        rep.log_exp_moment_p[t] = exponential_moment(tree, S, t);
        rep.log_exp_moment_q[t] = exponential_moment(res.Q, S, t);
        ok = ok && std::isfinite(rep.log_exp_moment_q[t]);
        for (int p = 1; p <= opts.p_max; ++p) {
            LogSumExp lse;
            for (int i : tree.nodes_at(t)) {
                double norm = S.value(i).norm();
                if (norm > 0.0) lse.add(std::log(q_measure[i]) + p * std::log(norm));
            }
            rep.moments_q[t][p - 1] = std::exp(lse.value());
        }
    }
    rep.postconditions_pass = ok;
    return res;
}

ConstructionResult corollary1(const ScenarioTree& tree, const AdaptedProcess& S, double eps,
                              const ConstructionOptions& opts) {
    ConstructionResult res = theorem1(tree, S, eps / 2.0, opts);
    bool ok = res.report.tv.l1 <= eps + 1e-12 &&
              std::abs(res.report.tv.l1 - res.report.tv.positive_part) <= 1e-10;
    res.report.postconditions_pass = res.report.postconditions_pass && ok;
    return res;
}

}  // namespace emm
