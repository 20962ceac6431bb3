#include "emm/examples.hpp"
#include "emm/generate.hpp"
#include "emm/json_io.hpp"
#include "emm/martingale.hpp"
#include "emm/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

namespace {

using emm::json;

struct RunConfig {
    std::string input;
    std::string output;
    std::string format = "json";
    double epsilon = 0.2;
    double tol_mart = 1e-10;
    double tol_z = 1e-10;
    int k_max_exp = 128;
    std::string minimizer = "gradient";
    int net_depth = 8;
    std::uint64_t seed = 0;
    int grid = 64;
    int p_max = 6;
};

int threads_cap() {
    if (const char* env = std::getenv("EMM_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

void emit(const RunConfig& cfg, const json& j, const std::string& suffix = "") {
    if (cfg.output.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        emm::write_text(cfg.output + suffix, j.dump(2) + "\n");
    }
}

emm::ConstructionOptions options_of(const RunConfig& cfg) {
    emm::ConstructionOptions opts;
    opts.tol_mart = cfg.tol_mart;
    opts.tol_z = cfg.tol_z;
    opts.k_max_exp = cfg.k_max_exp;
    opts.p_max = cfg.p_max;
    return opts;
}

int cmd_validate(const RunConfig& cfg) {
    try {
        emm::ScenarioTree tree = emm::ScenarioTree::validate(emm::load_raw_tree(cfg.input));
        std::cout << json{{"valid", true},
                          {"nodes", tree.node_count()},
                          {"horizon", tree.horizon()},
                          {"dimension", tree.dimension()}}
                         .dump(2)
                  << "\n";
        return 0;
    } catch (const emm::TreeError& e) {
        std::cout << json{{"valid", false}, {"code", e.code}, {"node", e.node}, {"what", e.what()}}
                         .dump(2)
                  << "\n";
        return 1;
    }
}

int cmd_generate(const RunConfig& cfg, const emm::GeneratorSpec& spec) {
    emm::GeneratedInstance inst = emm::generate_tree(spec);
    if (cfg.output.empty()) {
        json j = emm::raw_tree_to_json(inst.raw);
        j["metadata"] = {{"prng", inst.meta.prng},
                         {"seed", inst.meta.seed},
                         {"heavy_tail", inst.meta.heavy_tail},
                         {"max_over_median_abs_w", inst.meta.max_over_median_abs_w}};
        std::cout << j.dump(2) << "\n";
    } else {
        emm::save_raw_tree(cfg.output, inst.raw, &inst.meta);
        std::cout << "wrote " << cfg.output << " (" << inst.raw.nodes.size() << " nodes)\n";
    }
    return 0;
}

int cmd_analyze(const RunConfig& cfg) {
    emm::RawTree raw = emm::load_raw_tree(cfg.input);
    emm::ScenarioTree tree = emm::ScenarioTree::validate(raw);
    emm::AdaptedProcess S = emm::inline_process(tree, raw);
    emm::MartingaleReport mr = emm::generalized_martingale_check(tree, S, cfg.tol_mart);
    json j;
    j["martingale_analysis"] = emm::martingale_report_to_json(mr, tree);
    std::vector<emm::StoppingTime> taus{emm::StoppingTime::never(tree)};
    emm::LocalizationReport loc = emm::verify_localization(tree, S, taus, cfg.tol_mart, 1e-3);
    j["proposition1"] = emm::localization_report_to_json(loc);
    emit(cfg, j);
    if (!cfg.output.empty())
        std::cout << "martingale: " << (mr.is_martingale ? "yes" : "no")
                  << "  max residual: " << mr.max_residual_inf << "\n";
    return 0;
}

int cmd_construct(const RunConfig& cfg, bool use_corollary) {
    emm::RawTree raw = emm::load_raw_tree(cfg.input);
    emm::ScenarioTree tree = emm::ScenarioTree::validate(raw);
    emm::AdaptedProcess S = emm::inline_process(tree, raw);
    emm::ConstructionOptions opts = options_of(cfg);
    emm::ConstructionResult res = use_corollary ? emm::corollary1(tree, S, cfg.epsilon, opts)
                                                : emm::theorem1(tree, S, cfg.epsilon, opts);
    json report = emm::construction_report_to_json(res.report);
    report["threads"] = threads_cap();
    if (cfg.output.empty()) {
        json j;
        j["report"] = report;
        j["density"] = emm::density_to_json(tree, res.Z);
        std::cout << j.dump(2) << "\n";
    } else {
        emm::write_text(cfg.output + ".report.json", report.dump(2) + "\n");
        emm::write_text(cfg.output + ".density.json",
                        emm::density_to_json(tree, res.Z).dump(2) + "\n");
        if (cfg.format == "csv")
            emm::write_text(cfg.output + ".leaves.csv", emm::leaf_csv(tree, res.Q, res.Z));
        std::cout << "sup Z = " << report["sup_Z"].get<double>()
                  << "  TV = " << report["tv"]["l1"].get<double>()
                  << "  postconditions: " << (res.report.postconditions_pass ? "pass" : "FAIL")
                  << "\n";
    }
    return res.report.postconditions_pass ? 0 : 3;
}

int cmd_example(const RunConfig& cfg, const std::string& variant) {
    emm::ExampleSpec spec;
    spec.variant = variant == "two_jump" ? emm::ExampleSpec::two_jump : emm::ExampleSpec::one_jump;
    spec.N = cfg.grid;
    spec.eps = cfg.epsilon;
    emm::ExampleInstance ex = emm::build_example_tree(spec);
    emm::ExampleOracles o = emm::analytic_oracles(spec);

    emm::RawTree raw;
    raw.dimension = 1;
    raw.horizon = 2;
    for (int i = 0; i < ex.tree.node_count(); ++i) {
        const auto& n = ex.tree.node(i);
        raw.nodes.push_back({n.id,
                             n.parent < 0 ? std::nullopt
                                          : std::optional<std::string>(ex.tree.node(n.parent).id),
                             n.prob,
                             {ex.S.scalar(i)}});
    }
    json j;
    j["tree"] = emm::raw_tree_to_json(raw);
    j["oracles"] = {{"E_Z2_abs_S2", o.ez_abs_s_t2},
                    {"E_Z2_S2", o.ez2_s2},
                    {"E_Z1_Sprime1", o.ez1_sprime1},
                    {"E_abs_S2", o.e_abs_s2},
                    {"limit_E_Z_abs_S", o.limit_ez_abs_s},
                    {"limit_E_Z1_Sprime1", o.limit_ez1_sprime1}};
    emit(cfg, j);
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& variant, std::vector<int> grids) {
    if (grids.empty()) grids = {16, 32, 64, 128, 256};
    auto v = variant == "one_jump" ? emm::ExampleSpec::one_jump : emm::ExampleSpec::two_jump;
    std::vector<emm::SweepRow> rows =
        emm::divergence_sweep(v, grids, cfg.epsilon, options_of(cfg));
    if (cfg.format == "csv") {
        std::string out = "N,log_EP_exp,log_EQ_exp,EQ_abs_S2,TV,sup_Z\n";
        for (const auto& r : rows)
            out += std::to_string(r.N) + "," + std::to_string(r.log_ep_exp) + "," +
                   std::to_string(r.log_eq_exp) + "," + std::to_string(r.eq_abs_s2) + "," +
                   std::to_string(r.tv_l1) + "," + std::to_string(r.sup_Z) + "\n";
        if (cfg.output.empty())
            std::cout << out;
        else
            emm::write_text(cfg.output, out);
        return 0;
    }
    json j = json::array();
    for (const auto& r : rows)
        j.push_back({{"N", r.N},
                     {"log_EP_exp", r.log_ep_exp},
                     {"log_EQ_exp", r.log_eq_exp},
                     {"EQ_abs_S2", r.eq_abs_s2},
                     {"TV", r.tv_l1},
                     {"sup_Z", r.sup_Z}});
    emit(cfg, j);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Equivalent martingale measures on finite scenario trees"};
    app.require_subcommand(1);
    RunConfig cfg;
    emm::GeneratorSpec gen;
    std::string variant = "two_jump";
    std::vector<int> grids;
    bool use_corollary = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--epsilon", cfg.epsilon, "measure-change budget")->check(CLI::PositiveNumber);
        sub->add_option("--tol-martingale", cfg.tol_mart)->check(CLI::PositiveNumber);
        sub->add_option("--tol-z", cfg.tol_z)->check(CLI::PositiveNumber);
        sub->add_option("--k-max-exp", cfg.k_max_exp)->check(CLI::Range(0, 200));
        sub->add_option("--minimizer", cfg.minimizer)
            ->check(CLI::IsMember({"gradient", "net", "both"}));
        sub->add_option("--net-depth", cfg.net_depth)->check(CLI::Range(1, 12));
        sub->add_option("--p-max", cfg.p_max)->check(CLI::Range(1, 12));
        sub->add_option("--output", cfg.output);
        sub->add_option("--format", cfg.format)->check(CLI::IsMember({"json", "csv"}));
    };

    CLI::App* validate = app.add_subcommand("validate", "check a tree file");
    validate->add_option("input", cfg.input)->required();

    CLI::App* generate = app.add_subcommand("generate", "random recentered martingale tree");
    generate->add_option("--branching", gen.branching)->check(CLI::Range(2, 64));
    generate->add_option("--horizon", gen.horizon)->check(CLI::Range(1, 32));
    generate->add_option("--dimension", gen.dimension)->check(CLI::Range(1, 16));
    generate->add_option("--scale", gen.scale)->check(CLI::PositiveNumber);
    generate->add_option("--heavy-tail", gen.heavy_tail)->check(CLI::NonNegativeNumber);
    generate->add_option("--seed", gen.seed);
    generate->add_option("--output", cfg.output);

    CLI::App* analyze = app.add_subcommand("analyze", "martingale analysis report");
    analyze->add_option("input", cfg.input)->required();
    add_common(analyze);

    CLI::App* construct = app.add_subcommand("construct", "build the equivalent measure");
    construct->add_option("input", cfg.input)->required();
    construct->add_flag("--corollary", use_corollary, "target total variation <= epsilon");
    add_common(construct);

    CLI::App* example = app.add_subcommand("example", "two-period lattice with oracles");
    example->add_option("--variant", variant)->check(CLI::IsMember({"one_jump", "two_jump"}));
    example->add_option("--grid", cfg.grid)->check(CLI::Range(2, 1 << 20));
    add_common(example);

    CLI::App* sweep = app.add_subcommand("sweep", "divergence sweep over grid sizes");
    sweep->add_option("--variant", variant)->check(CLI::IsMember({"one_jump", "two_jump"}));
    sweep->add_option("--grid", grids, "grid sizes (repeatable)");
    add_common(sweep);

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(cfg);
        if (generate->parsed()) return cmd_generate(cfg, gen);
        if (analyze->parsed()) return cmd_analyze(cfg);
        if (construct->parsed()) return cmd_construct(cfg, use_corollary);
        if (example->parsed()) return cmd_example(cfg, variant);
        if (sweep->parsed()) return cmd_sweep(cfg, variant, grids);
    } catch (const emm::ConstructionError& e) {
        std::cout << json{{"error", e.code}, {"atom", e.atom}, {"what", e.what()}}.dump(2) << "\n";
        if (e.code == "NoFeasibleK" || e.code == "BoundaryMinimizer") return 2;
        return e.code == "NotLocalMartingaleInput" ? 1 : 3;
    } catch (const emm::TreeError& e) {
        std::cout << json{{"error", e.code}, {"node", e.node}, {"what", e.what()}}.dump(2) << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
