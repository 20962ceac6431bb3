#include "emm/json_io.hpp"

#include <fstream>
#include <sstream>

namespace emm {

RawTree raw_tree_from_json(const json& j) {
    RawTree raw;
    raw.dimension = j.at("dimension").get<int>();
    raw.horizon = j.at("horizon").get<int>();
    for (const auto& n : j.at("nodes")) {
        RawNode node;
        node.id = n.at("id").get<std::string>();
        if (!n.at("parent").is_null()) node.parent = n.at("parent").get<std::string>();
        node.prob = n.at("p").get<double>();
        if (n.contains("s")) node.state = n.at("s").get<std::vector<double>>();
        raw.nodes.push_back(std::move(node));
    }
    return raw;
}

json raw_tree_to_json(const RawTree& raw) {
    json j;
    j["dimension"] = raw.dimension;
    j["horizon"] = raw.horizon;
    j["nodes"] = json::array();
    for (const auto& n : raw.nodes) {
        json jn;
        jn["id"] = n.id;
        if (n.parent)
            jn["parent"] = *n.parent;
        else
            jn["parent"] = nullptr;
        jn["p"] = n.prob;
        if (!n.state.empty()) jn["s"] = n.state;
        j["nodes"].push_back(std::move(jn));
    }
    return j;
}

RawTree load_raw_tree(const std::string& path) {
    return raw_tree_from_json(json::parse(read_text(path)));
}

void save_raw_tree(const std::string& path, const RawTree& raw, const GeneratorMetadata* meta) {
    json j = raw_tree_to_json(raw);
    if (meta) {
        j["metadata"] = {{"prng", meta->prng},
                         {"seed", meta->seed},
                         {"heavy_tail", meta->heavy_tail},
                         {"max_over_median_abs_w", meta->max_over_median_abs_w}};
    }
    write_text(path, j.dump(2) + "\n");
}

AdaptedProcess inline_process(const ScenarioTree& tree, const RawTree& raw) {
    Matrix vals = Matrix::Zero(tree.node_count(), tree.dimension());
    for (const auto& n : raw.nodes) {
        if (n.state.empty()) continue;
        if (static_cast<int>(n.state.size()) != tree.dimension())
            throw TreeError("DimensionMismatch", n.id, "inline state has wrong dimension");
        int i = tree.index_of(n.id);
        for (int k = 0; k < tree.dimension(); ++k) vals(i, k) = n.state[k];
    }
    return AdaptedProcess(tree, std::move(vals));
}

json density_to_json(const ScenarioTree& tree, const Vector& z) {
    json proc = json::object();
    for (int i = 0; i < tree.node_count(); ++i) proc[tree.node(i).id] = z[i];
    return json{{"process", std::move(proc)}};
}

json martingale_report_to_json(const MartingaleReport& rep, const ScenarioTree& tree) {
    json j;
    j["is_martingale"] = rep.is_martingale;
    j["max_residual_inf"] = rep.max_residual_inf;
    j["scale"] = rep.scale;
    j["tol"] = rep.tol;
    j["l1_norm"] = rep.l1_norm;
    j["log_exp_moment"] = rep.log_exp_moment;
    json worst = nullptr;
    double worst_val = -1.0;
    for (const auto& r : rep.residuals) {
        double v = r.residual.cwiseAbs().maxCoeff();
        if (v > worst_val) {
            worst_val = v;
            worst = {{"node", tree.node(r.node).id}, {"time", r.time}, {"residual_inf", v}};
        }
    }
    j["worst_atom"] = std::move(worst);
    return j;
}

json localization_report_to_json(const LocalizationReport& rep) {
    json stages = json::array();
    for (const auto& st : rep.stages)
        stages.push_back({{"max_residual_inf", st.max_residual_inf},
                          {"stopped_mass", st.stopped_mass},
                          {"martingale", st.martingale}});
    return json{{"passes", rep.passes},
                {"residuals_pass", rep.residuals_pass},
                {"exhaustion_pass", rep.exhaustion_pass},
                {"first_failing_stage", rep.first_failing_stage},
                {"stages", std::move(stages)}};
}

json construction_report_to_json(const ConstructionReport& rep) {
    json j;
    j["epsilon"] = rep.epsilon;
    j["schedule"] = json::array();
    for (const auto& s : rep.schedule)
        j["schedule"].push_back({{"n", s.n},
                                 {"eps_n", s.eps_n},
                                 {"eps_tilde", s.eps_tilde},
                                 {"M_n", s.M_n},
                                 {"sup_Zn", s.sup_Zn},
                                 {"inf_Zn", s.inf_Zn},
                                 {"mass_below", s.mass_below},
                                 {"log_E_Y_next", s.log_EQprime_Y},
                                 {"max_log_K", s.max_log_K},
                                 {"atoms_damped", s.atoms_damped}});
    j["sup_Z"] = rep.sup_Z;
    j["inf_Z"] = rep.inf_Z;
    j["tv"] = {{"l1", rep.tv.l1}, {"positive_part", rep.tv.positive_part}};
    j["residuals"] = {{"before", rep.resid_before},
                      {"after", rep.resid_after},
                      {"scale", rep.resid_scale},
                      {"density", rep.density_resid},
                      {"series_max", rep.bc_series_max},
                      {"series_mean", rep.bc_series_mean}};
    json moments;
    moments["abs_power_q"] = rep.moments_q;
    moments["log_exp_p"] = rep.log_exp_moment_p;
    moments["log_exp_q"] = rep.log_exp_moment_q;
    j["moments"] = std::move(moments);
    json atoms = json::array();
    for (const auto& a : rep.atoms)
        if (a.mass_truncated > 0.0 || a.sup_z != 1.0 || a.inf_z != 1.0)
            atoms.push_back({{"atom", a.atom_id},
                             {"stage", a.stage},
                             {"time", a.time},
                             {"log_K", a.log_K},
                             {"mass_truncated", a.mass_truncated},
                             {"sup_z", a.sup_z},
                             {"inf_z", a.inf_z},
                             {"residual", a.residual}});
    j["atoms"] = {{"total", rep.atoms.size()}, {"active", std::move(atoms)}};
    j["postconditions_pass"] = rep.postconditions_pass;
    return j;
}

std::string leaf_csv(const ScenarioTree& tree, const ScenarioTree& treeQ, const Vector& Z) {
    Vector p = tree.node_measure();
    Vector q = treeQ.node_measure();
    std::ostringstream out;
    out << "id,P,Q,Z\n";
    out.precision(17);
    for (int leaf : tree.leaves())
        out << tree.node(leaf).id << ',' << p[leaf] << ',' << q[leaf] << ',' << Z[leaf] << '\n';
    return out.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << text;
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace emm
