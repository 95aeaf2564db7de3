#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "smerf/config.hpp"
#include "smerf/errors.hpp"
#include "smerf/metrics.hpp"
#include "smerf/report.hpp"

using namespace smerf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("smerf_cli_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

// Runs the installed CLI binary; returns its exit code.
int run_cli(const std::string& args, std::string* output = nullptr) {
    TempDir scratch;
    std::string capture = scratch.file("out.txt");
    std::string cmd = std::string(SMERF_BIN) + " " + args + " >" + capture + " 2>&1";
    int status = std::system(cmd.c_str());
    if (output) *output = read_file(capture);
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return -1;
}

}  // namespace

TEST_CASE("config json round-trips to the same effective hash") {
    cfg::RunConfig base;
    base.seed = 123;
    base.scene.layout = synth::RoadLayout::kFourWay;
    base.scene.sd_noise_sigma = 0.4;
    base.toy.width = 16;
    base.toy.epochs = 5;
    base.propagate();

    json dumped = cfg::config_to_json(base);
    cfg::RunConfig back = cfg::config_from_json(dumped);
    CHECK(cfg::config_hash(back) == cfg::config_hash(base));
    CHECK(cfg::config_to_json(back) == dumped);
}

TEST_CASE("partial configs keep defaults, unknown keys are rejected") {
    cfg::RunConfig from_empty = cfg::config_from_json(json::object());
    cfg::RunConfig defaults;
    defaults.propagate();
    CHECK(cfg::config_hash(from_empty) == cfg::config_hash(defaults));

    cfg::RunConfig partial = cfg::config_from_json(json{{"seed", 99}});
    CHECK(partial.seed == 99);
    CHECK(partial.synth_count == defaults.synth_count);

    CHECK_THROWS_AS(cfg::config_from_json(json{{"sead", 99}}), StructuralError);
    CHECK_THROWS_AS(cfg::config_from_json(json{{"synth", {{"layout", "straight"}, {"count_", 3}}}}),
                    StructuralError);
}

TEST_CASE("config hash moves with every effective parameter") {
    cfg::RunConfig a;
    a.propagate();
    auto base_hash = cfg::config_hash(a);

    auto mutate = [&](auto&& f) {
        cfg::RunConfig c;
        f(c);
        c.propagate();
        return cfg::config_hash(c);
    };

    CHECK(mutate([](cfg::RunConfig& c) { c.seed = 8; }) != base_hash);
    CHECK(mutate([](cfg::RunConfig& c) { c.toy.epochs = 31; }) != base_hash);
    CHECK(mutate([](cfg::RunConfig& c) { c.scene.sd_noise_sigma = 0.01; }) != base_hash);
    CHECK(mutate([](cfg::RunConfig& c) { c.bev_range.forward = 49.0; }) != base_hash);
    CHECK(mutate([](cfg::RunConfig&) {}) == base_hash);

    // The hex form is 16 lowercase hex digits.
    auto hex = cfg::config_hash_hex(a);
    CHECK(hex.size() == 16);
    CHECK(hex.find_first_not_of("0123456789abcdef") == std::string::npos);
}

TEST_CASE("manifests record command, version, hash and artifacts") {
    TempDir dir;
    cfg::RunConfig c;
    c.seed = 5;
    c.propagate();
    cfg::ManifestInfo info;
    info.command = "synth";
    info.inputs = {"none"};
    info.outputs = {dir.file("scene_00000.json")};
    info.seeds = {5, 6, 7};
    cfg::write_manifest(dir.file("manifest.json"), c, info);

    json m = json::parse(read_file(dir.file("manifest.json")));
    CHECK(m.at("command") == "synth");
    CHECK(m.at("version") == cfg::kToolkitVersion);
    CHECK(m.at("config_hash") == cfg::config_hash_hex(c));
    CHECK(m.at("seeds") == json({5, 6, 7}));
    CHECK(m.at("outputs").size() == 1);
    cfg::RunConfig embedded = cfg::config_from_json(m.at("config"));
    CHECK(cfg::config_hash(embedded) == cfg::config_hash(c));
}

TEST_CASE("thread resolution prefers the environment variable") {
    cfg::RunConfig c;
    c.threads = 3;
    ::unsetenv("SMERF_THREADS");
    CHECK(cfg::resolve_threads(c) == 3);
    ::setenv("SMERF_THREADS", "5", 1);
    CHECK(cfg::resolve_threads(c) == 5);
    ::setenv("SMERF_THREADS", "0", 1);  // invalid: fall back to the config
    CHECK(cfg::resolve_threads(c) == 3);
    ::unsetenv("SMERF_THREADS");
}

TEST_CASE("percentage deltas format like the tables they feed") {
    CHECK(report::delta_percent(17.0, 26.8) == "+57.6%");
    CHECK(report::delta_percent(40.0, 30.0) == "-25.0%");
    CHECK(report::delta_percent(0.0, 12.0) == "—");
    CHECK(report::delta_percent(50.0, 50.0) == "+0.0%");
    CHECK(report::delta_percent(100.0, 100.01) == "+0.0%");
}

TEST_CASE("markdown report renders deltas only with a baseline") {
    ev::EvalReport solo;
    solo.det_l = 30.0;
    solo.det_t = 40.0;
    solo.top_ll = 9.0;
    solo.top_lt = 16.0;
    solo.ols = 52.0;

    std::string one = report::render_markdown({{"camera", solo}});
    CHECK(one.find("camera") != std::string::npos);
    CHECK(one.find("30.0") != std::string::npos);
    CHECK(one.find("Δ") == std::string::npos);

    ev::EvalReport better = solo;
    better.det_l = 39.0;
    std::string two = report::render_markdown({{"camera", solo}, {"fused", better}});
    CHECK(two.find("fused") != std::string::npos);
    CHECK(two.find("+30.0%") != std::string::npos);  // 30 -> 39

    std::string csv = report::render_csv({{"camera", solo}, {"fused", better}});
    CHECK(csv.find("run,section") == 0);
    CHECK(csv.find("camera,") != std::string::npos);
    CHECK(csv.find("delta") != std::string::npos);
}

TEST_CASE("cli: help and version succeed, usage errors exit 2") {
    std::string out;
    CHECK(run_cli("--help", &out) == 0);
    CHECK(out.find("synth") != std::string::npos);
    CHECK(run_cli("--version", &out) == 0);
    CHECK(out.find(cfg::kToolkitVersion) != std::string::npos);
    CHECK(run_cli("eval --help", &out) == 0);

    CHECK(run_cli("frobnicate", &out) == 2);
    CHECK(run_cli("eval --pred /nonexistent", &out) == 2);  // missing --gt
    CHECK(run_cli("synth --layout hexagon --out /tmp/x", &out) == 2);
    CHECK(run_cli("", &out) == 2);  // a subcommand is required
}

TEST_CASE("cli: missing files are runtime errors with the path named") {
    std::string out;
    int code = run_cli("eval --gt /nonexistent_dir_a --pred /nonexistent_dir_b", &out);
    CHECK(code == 1);
    CHECK(out.find("error") != std::string::npos);
    CHECK(out.find("/nonexistent_dir_a") != std::string::npos);
}

TEST_CASE("cli: synth, split, train, eval and report form a working pipeline") {
    TempDir dir;
    std::string out;

    // Generate a small dataset.
    int code = run_cli("synth --layout straight --count 8 --seed 50 --noise 0.3"
                       " --occlusion range_limit:25 --grid-rows 6 --grid-cols 3 --out " +
                           dir.file("scenes"), &out);
    REQUIRE(code == 0);
    int scene_files = 0;
    for (auto& e : fs::directory_iterator(dir.file("scenes")))
        scene_files += e.path().filename().string().rfind("scene_", 0) == 0;
    CHECK(scene_files == 8);
    CHECK(fs::exists(dir.file("scenes") + "/manifest.json"));

    // Geo-disjoint split.
    code = run_cli("split --input " + dir.file("scenes") +
                       " --tiles 100m --val 0.4 --seed 5 --out " + dir.file("split"), &out);
    REQUIRE(code == 0);
    std::string train_list = read_file(dir.file("split") + "/train.txt");
    std::string val_list = read_file(dir.file("split") + "/val.txt");
    CHECK(!train_list.empty());
    CHECK(!val_list.empty());

    // Train a tiny fused model on everything, then predict onto disk.
    code = run_cli("train-toy --data " + dir.file("scenes") +
                       " --use-sd-map on --seed 50 --epochs 2 --width 8 --heads 2"
                       " --refine-layers 1 --lane-queries 4 --sd-encoder-layers 1"
                       " --out " + dir.file("toy.smck") +
                       " --predict-data " + dir.file("scenes") +
                       " --predict-out " + dir.file("preds"), &out);
    REQUIRE(code == 0);
    CHECK(fs::exists(dir.file("toy.smck")));
    CHECK(fs::exists(dir.file("toy.smck") + ".log.json"));
    CHECK(fs::exists(dir.file("preds") + "/scene_00000.json"));

    // Evaluate predictions against ground truth.
    code = run_cli("eval --gt " + dir.file("scenes") + " --pred " + dir.file("preds") +
                       " --report json --out " + dir.file("report.json"), &out);
    REQUIRE(code == 0);
    json rep = json::parse(read_file(dir.file("report.json")));
    CHECK(rep.contains("det_l"));
    CHECK(rep.contains("breakdowns"));

    // Same metrics rendered as a markdown comparison.
    code = run_cli("report --input " + dir.file("report.json") + " " + dir.file("report.json") +
                       " --format md --out " + dir.file("cmp.md"), &out);
    REQUIRE(code == 0);
    std::string md = read_file(dir.file("cmp.md"));
    CHECK(md.find("DET_l") != std::string::npos);

    // Evaluating against a prediction directory missing a scene fails loudly.
    fs::remove(dir.file("preds") + "/scene_00003.json");
    code = run_cli("eval --gt " + dir.file("scenes") + " --pred " + dir.file("preds") +
                       " --report json --out " + dir.file("r2.json"), &out);
    CHECK(code == 1);
    CHECK(out.find("scene_00003") != std::string::npos);
}

TEST_CASE("cli: encode writes the sequence tensor for a posed tile query") {
    TempDir dir;
    std::string out;

    // A small hand-authored tile around the origin.
    json tile = {
        {"bounds", {-200.0, -200.0, 200.0, 200.0}},
        {"polylines",
         {{{"points", {{-80.0, 0.0}, {80.0, 0.0}}},
           {"tags", {{"highway", "residential"}}}},
          {{"points", {{0.0, -80.0}, {0.0, 80.0}}},
           {"tags", {{"highway", "service"}}}}}}};
    write_file(dir.file("tile.json"), tile.dump());

    int code = run_cli("encode --tile " + dir.file("tile.json") +
                           " --pose 0,0,0 --out " + dir.file("map.smrf"), &out);
    REQUIRE(code == 0);
    CHECK(fs::exists(dir.file("map.smrf")));

    // Ingest normalizes either input format into tile JSON.
    code = run_cli("ingest --input " + dir.file("tile.json") + " --format json --out " +
                       dir.file("tile2.json"), &out);
    REQUIRE(code == 0);
    json reparsed = json::parse(read_file(dir.file("tile2.json")));
    CHECK(reparsed.at("polylines").size() == 2);

    // Stats prints a per-category histogram.
    code = run_cli("stats --input " + dir.file("tile2.json"), &out);
    REQUIRE(code == 0);
    CHECK(out.find("residential") != std::string::npos);

    // Out-of-coverage pose is a runtime error, not a crash.
    code = run_cli("encode --tile " + dir.file("tile.json") +
                       " --pose 500,0,0 --out " + dir.file("bad.smrf"), &out);
    CHECK(code == 1);
}
