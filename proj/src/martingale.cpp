#include "emm/martingale.hpp"

#include "emm/logsumexp.hpp"

#include <cmath>

namespace emm {

namespace {

double increment_scale(const ScenarioTree& tree, const AdaptedProcess& S) {
    double max_ds = 0.0;
    for (int i = 0; i < tree.node_count(); ++i) {
        int par = tree.node(i).parent;
        if (par < 0) continue;
        max_ds = std::max(max_ds, (S.value(i) - S.value(par)).cwiseAbs().maxCoeff());
    }
    return 1.0 + max_ds;
}

void fill_time_norms(const ScenarioTree& tree, const AdaptedProcess& S, MartingaleReport& rep) {
    Vector p = tree.node_measure();
    rep.l1_norm.assign(tree.horizon() + 1, 0.0);
    rep.log_exp_moment.assign(tree.horizon() + 1, 0.0);
    for (int t = 0; t <= tree.horizon(); ++t) {
        LogSumExp lse;
        double l1 = 0.0;
        for (int i : tree.nodes_at(t)) {
            double norm = S.value(i).norm();
            l1 += p[i] * norm;
            lse.add(std::log(p[i]) + norm);
        }
        rep.l1_norm[t] = l1;
        rep.log_exp_moment[t] = lse.value();
    }
}

}  // namespace

MartingaleReport martingale_residuals(const ScenarioTree& tree, const AdaptedProcess& S,
                                      double tol_mart) {
    MartingaleReport rep;
    rep.tol = tol_mart;
    rep.scale = increment_scale(tree, S);
    rep.cond_abs_max.assign(std::max(tree.horizon(), 0), 0.0);
    for (int t = 0; t < tree.horizon(); ++t) {
        for (int g : tree.nodes_at(t)) {
            Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(S.dimension());
            double abs_acc = 0.0;
            for (int c : tree.node(g).children) {
                acc += tree.node(c).prob * S.value(c);
                abs_acc += tree.node(c).prob * S.value(c).norm();
            }
            MartingaleReport::AtomResidual r;
            r.node = g;
            r.time = t;
            r.residual = (acc - S.value(g)).transpose();
            rep.max_residual_inf = std::max(rep.max_residual_inf, r.residual.cwiseAbs().maxCoeff());
            rep.cond_abs_max[t] = std::max(rep.cond_abs_max[t], abs_acc);
            rep.residuals.push_back(std::move(r));
        }
    }
    fill_time_norms(tree, S, rep);
    rep.is_martingale = rep.max_residual_inf <= tol_mart * rep.scale;
    return rep;
}

MartingaleReport generalized_martingale_check(const ScenarioTree& tree, const AdaptedProcess& S,
                                              double tol_mart) {
    MartingaleReport rep = martingale_residuals(tree, S, tol_mart);
    // truncated-limit route, per coordinate: E[S^+ ^ k] - E[S^- ^ k] at k = max|S|
    const double k = S.values().cwiseAbs().maxCoeff();
    const int d = S.dimension();
    for (int coord = 0; coord < d; ++coord) {
        Matrix pos = S.values().col(coord).cwiseMax(0.0);
        Matrix neg = (-S.values().col(coord)).cwiseMax(0.0);
        AdaptedProcess Sp(tree, Matrix(pos)), Sn(tree, Matrix(neg));
        size_t ri = 0;
        for (int t = 0; t < tree.horizon(); ++t) {
            Vector ep = cond_expectation_truncated(tree, Sp, t, k);
            Vector en = cond_expectation_truncated(tree, Sn, t, k);
            const auto& atoms = tree.nodes_at(t);
            for (size_t g = 0; g < atoms.size(); ++g, ++ri) {
                double via_trunc = ep[g] - en[g] - S.values()(atoms[g], coord);
                double direct = rep.residuals[ri].residual[coord];
                if (std::abs(via_trunc - direct) > 1e-12 * rep.scale)
                    throw TreeError("TruncationMismatch", tree.node(atoms[g]).id,
                                    "truncated route disagrees with direct residuals");
            }
        }
    }
    return rep;
}

LocalizationReport verify_localization(const ScenarioTree& tree, const AdaptedProcess& S,
                                       const std::vector<StoppingTime>& taus, double tol_mart,
                                       double delta) {
    LocalizationReport rep;
    rep.residuals_pass = true;
    for (size_t n = 0; n < taus.size(); ++n) {
        AdaptedProcess stopped = stopped_process(tree, S, taus[n]);
        // a root mark zeroes the whole stopped process: 1{tau > 0}
        Matrix vals = stopped.values();
        if (taus[n].marked(0)) vals.setZero();
        MartingaleReport mr = martingale_residuals(tree, AdaptedProcess(tree, std::move(vals)), tol_mart);
        LocalizationReport::Stage st;
        st.max_residual_inf = mr.max_residual_inf;
        st.stopped_mass = taus[n].stopped_mass(tree);
        st.martingale = mr.is_martingale;
        if (!st.martingale && rep.first_failing_stage < 0)
            rep.first_failing_stage = static_cast<int>(n);
        rep.residuals_pass = rep.residuals_pass && st.martingale;
        rep.stages.push_back(st);
    }
    rep.exhaustion_pass = !rep.stages.empty() && rep.stages.back().stopped_mass < delta;
    for (size_t n = 1; n < rep.stages.size() && rep.exhaustion_pass; ++n)
        if (rep.stages[n].stopped_mass > rep.stages[n - 1].stopped_mass + 1e-15)
            rep.exhaustion_pass = false;
    rep.passes = rep.residuals_pass && rep.exhaustion_pass;
    return rep;
}

Proposition1Report proposition1_check(const ScenarioTree& tree, const AdaptedProcess& S,
                                      const std::vector<StoppingTime>& taus, double tol_mart,
                                      double delta) {
    Proposition1Report rep;
    rep.localization = verify_localization(tree, S, taus, tol_mart, delta);
    if (!rep.localization.passes)
        throw TreeError("NotLocalizing", "",
                        "localization failed at stage " +
                            std::to_string(rep.localization.first_failing_stage));
    rep.generalized = generalized_martingale_check(tree, S, tol_mart);
    rep.passes = rep.generalized.is_martingale;
    return rep;
}

double exponential_moment(const ScenarioTree& tree, const AdaptedProcess& S, int t) {
    Vector p = tree.node_measure();
    LogSumExp lse;
    for (int i : tree.nodes_at(t)) lse.add(std::log(p[i]) + S.value(i).norm());
    return lse.value();
}

}  // namespace emm
