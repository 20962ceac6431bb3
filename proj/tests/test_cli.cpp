#include "emm/json_io.hpp"

#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("emm_cli_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args, const std::string& out_file = "/dev/null") {
    std::string cmd = std::string(EMM_BIN) + " " + args + " > " + out_file + " 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("validate command exit codes") {
    TempDir dir;
    SUBCASE("valid coin file") {
        emm::write_text(dir.file("coin.json"), R"({"dimension":1,"horizon":1,"nodes":[
            {"id":"root","parent":null,"p":1.0},
            {"id":"a","parent":"root","p":0.5},
            {"id":"b","parent":"root","p":0.5}]})");
        CHECK(run("validate " + dir.file("coin.json")) == 0);
    }
    SUBCASE("probability sum violation") {
        emm::write_text(dir.file("bad.json"), R"({"dimension":1,"horizon":1,"nodes":[
            {"id":"root","parent":null,"p":1.0},
            {"id":"a","parent":"root","p":0.6},
            {"id":"b","parent":"root","p":0.5}]})");
        CHECK(run("validate " + dir.file("bad.json"), dir.file("out.json")) == 1);
        CHECK(emm::read_text(dir.file("out.json")).find("ChildrenSumNotOne") !=
              std::string::npos);
    }
    SUBCASE("missing parent") {
        emm::write_text(dir.file("orphan.json"), R"({"dimension":1,"horizon":1,"nodes":[
            {"id":"root","parent":null,"p":1.0},
            {"id":"a","parent":"ghost","p":1.0}]})");
        CHECK(run("validate " + dir.file("orphan.json"), dir.file("out.json")) == 1);
        CHECK(emm::read_text(dir.file("out.json")).find("OrphanNode") != std::string::npos);
    }
}

TEST_CASE("generate is deterministic and feeds the pipeline") {
    TempDir dir;
    std::string a = dir.file("a.json"), b = dir.file("b.json");
    REQUIRE(run("generate --branching 3 --horizon 3 --dimension 2 --seed 7 --output " + a) == 0);
    REQUIRE(run("generate --branching 3 --horizon 3 --dimension 2 --seed 7 --output " + b) == 0);
    CHECK(emm::read_text(a) == emm::read_text(b));

    // saved trees reload byte-identically (canonical field order)
    emm::RawTree raw = emm::load_raw_tree(a);
    std::string again = dir.file("again.json");
    emm::write_text(again, emm::raw_tree_to_json(raw).dump(2) + "\n");
    emm::json ja = emm::json::parse(emm::read_text(a));
    ja.erase("metadata");
    CHECK(ja.dump(2) + "\n" == emm::read_text(again));

    CHECK(run("analyze " + a, dir.file("an.json")) == 0);
    CHECK(emm::read_text(dir.file("an.json")).find("martingale_analysis") != std::string::npos);
    CHECK(run("construct " + a + " --epsilon 0.2 --output " + dir.file("run")) == 0);
    emm::json rep = emm::json::parse(emm::read_text(dir.file("run.report.json")));
    CHECK(rep["postconditions_pass"].get<bool>());
    CHECK(rep["sup_Z"].get<double>() <= 1.2 + 1e-12);
}

TEST_CASE("construct on the constant process writes the unit density") {
    TempDir dir;
    emm::write_text(dir.file("flat.json"), R"({"dimension":1,"horizon":1,"nodes":[
        {"id":"root","parent":null,"p":1.0,"s":[0.0]},
        {"id":"a","parent":"root","p":0.5,"s":[0.0]},
        {"id":"b","parent":"root","p":0.5,"s":[0.0]}]})");
    REQUIRE(run("construct " + dir.file("flat.json") + " --epsilon 0.5 --output " +
                dir.file("flat")) == 0);
    emm::json dens = emm::json::parse(emm::read_text(dir.file("flat.density.json")));
    for (const auto& [id, z] : dens["process"].items())
        CHECK(z.get<double>() == doctest::Approx(1.0));
}

TEST_CASE("drifted input fails with a located atom") {
    TempDir dir;
    emm::write_text(dir.file("drift.json"), R"({"dimension":1,"horizon":1,"nodes":[
        {"id":"root","parent":null,"p":1.0,"s":[0.0]},
        {"id":"a","parent":"root","p":0.5,"s":[2.0]},
        {"id":"b","parent":"root","p":0.5,"s":[0.0]}]})");
    CHECK(run("analyze " + dir.file("drift.json"), dir.file("an.json")) == 0);
    emm::json rep = emm::json::parse(emm::read_text(dir.file("an.json")));
    CHECK_FALSE(rep["martingale_analysis"]["is_martingale"].get<bool>());
    CHECK(rep["martingale_analysis"]["worst_atom"]["node"] == "root");
    // construction refuses the same input as a validation failure
    CHECK(run("construct " + dir.file("drift.json") + " --epsilon 0.5", dir.file("c.json")) == 1);
}

TEST_CASE("infeasible grid reports exit code 2") {
    TempDir dir;
    // exponential moment far above the largest grid level at k-max-exp 4
    emm::write_text(dir.file("hot.json"), R"({"dimension":1,"horizon":1,"nodes":[
        {"id":"root","parent":null,"p":1.0,"s":[0.0]},
        {"id":"a","parent":"root","p":0.5,"s":[200.0]},
        {"id":"b","parent":"root","p":0.5,"s":[-200.0]}]})");
    CHECK(run("construct " + dir.file("hot.json") + " --epsilon 0.001 --k-max-exp 4",
              dir.file("c.json")) == 2);
    CHECK(emm::read_text(dir.file("c.json")).find("NoFeasibleK") != std::string::npos);
}

TEST_CASE("example and sweep commands") {
    TempDir dir;
    REQUIRE(run("example --variant two_jump --grid 64 --epsilon 0.5 --output " +
                dir.file("ex.json")) == 0);
    emm::json ex = emm::json::parse(emm::read_text(dir.file("ex.json")));
    CHECK(ex["tree"]["nodes"].size() == 1 + 64 + 128);
    CHECK(ex["oracles"]["E_Z2_abs_S2"].get<double>() == doctest::Approx(2.0));
    CHECK(ex["oracles"]["E_Z1_Sprime1"].get<double>() == doctest::Approx(0.5));

    REQUIRE(run("sweep --variant two_jump --grid 4 --grid 8 --epsilon 0.5 --format csv "
                "--output " + dir.file("sweep.csv")) == 0);
    std::string csv = emm::read_text(dir.file("sweep.csv"));
    CHECK(csv.rfind("N,", 0) == 0);
    CHECK(csv.find("\n4,") != std::string::npos);
    CHECK(csv.find("\n8,") != std::string::npos);
}

TEST_CASE("flag validation") {
    CHECK(run("construct missing.json --epsilon -1") != 0);
    CHECK(run("construct missing.json --k-max-exp 500") != 0);
    CHECK(run("unknown-command") != 0);
}
