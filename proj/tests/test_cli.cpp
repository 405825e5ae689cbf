#include <doctest.h>

#include <stdexcept>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "postdiff/cli.hpp"
#include "postdiff/grid_io.hpp"
#include "postdiff/kv_text.hpp"

using namespace postdiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("postdiff-test-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct Run {
    int code;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "postdiff");
    std::ostringstream out, err;
    const int code = cli_main(args, out, err);
    return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("config schema") {
    CHECK_THROWS_WITH_AS(RunConfig::from_text("[sampler]\nq = 1\n"), doctest::Contains("sampler.q"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("T = 3\n"), ConfigError);
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.apply_override("sampler.q=1"), ConfigError);
    CHECK_THROWS_AS(cfg.apply_override("sampler.T"), ConfigError);
    cfg.apply_override("sampler.T = 8");
    CHECK(cfg.get("sampler.T") == "8");

    cfg.apply_override("run.out=/tmp/pd");
    const auto again = RunConfig::from_text(cfg.format());
    CHECK(again.format() == cfg.format());
    CHECK(RunConfig::from_text("[run]\nout = res\n", "/srv/x").get("run.out") == "/srv/x/res");

    for (const auto& [key, value, bad] : std::vector<std::tuple<std::string, std::string, std::string>>{
             {"sampler.beta", "0.3", "sampler"},
             {"sampler.s", "x", "sampler.s"},
             {"cache.ca_choice", "both", "cache.ca_choice"},
             {"cache.m", "30", "cache.m"},
             {"sampler.class", "9", "sampler.class"},
             {"model.denoiser", "neural", "model.denoiser"},
             {"model.mixture", "/nonexistent.mix", "model.mixture"},
             {"model.cost", "/nonexistent.cost", "model.cost"},
             {"run.n_samples", "0", "run.n_samples"},
             {"sweep.axes", "s=", "sweep.axes"},
         }) {
        RunConfig c;
        c.set("sampler.s", "0.5");
        c.set("sampler.beta", "0.5");
        c.set(key, value);
        CAPTURE(key);
        try {
            resolve(c);
            FAIL("accepted " << key << " = " << value);
        } catch (const ConfigError& e) {
            CHECK(e.key() == bad);
        }
    }

    const auto presets = RunConfig::preset_names();
    CHECK(presets.size() == 4);
    for (const auto& name : presets) CHECK_NOTHROW(resolve(RunConfig::preset(name)));
    const auto sd = resolve(RunConfig::preset("sd15-pd"));
    CHECK(sd.sampler.steps == 20);
    CHECK(sd.sampler.s == 0.5);
    CHECK(sd.sampler.beta == 0.5);
    CHECK(sd.sampler.w == 7.5);
    CHECK(sd.sampler.policy.m == 15);
    CHECK(sd.sampler.policy.k == 2);
    CHECK(sd.sampler.policy.ca_choice == CaChoice::Cond);
    const auto lcm = resolve(RunConfig::preset("lcm-pd"));
    CHECK_FALSE(lcm.sampler.policy.deep_enabled);
    CHECK_FALSE(resolve(RunConfig::preset("pixart-pd")).sampler.policy.deep_enabled);
    CHECK_THROWS_AS(RunConfig::preset("sd3-pd"), ConfigError);
}

TEST_CASE("axes presets") {
    CHECK(parse_axes(axes_preset("s-grid", 20))[0].values.size() == 6);
    CHECK(parse_axes(axes_preset("beta-grid", 20))[0].values ==
          std::vector<std::string>{"0.375", "0.5", "0.625", "0.75", "0.875"});
    CHECK(parse_axes(axes_preset("k-ablation", 20))[0].values.size() == 5);
    CHECK(parse_axes(axes_preset("m-ablation", 20))[0].values == std::vector<std::string>{"9", "12", "15", "18"});
    CHECK_THROWS_AS(axes_preset("t-grid", 20), ConfigError);
    CHECK_THROWS_AS(parse_axes("s"), ConfigError);
    CHECK_THROWS_AS(parse_axes("zeta=1"), ConfigError);
    CHECK(parse_axes("").empty());
}

TEST_CASE("generate command") {
    const auto dir = scratch("generate");
    const auto r   = cli({"generate", "--preset", "sd15-pd", "--set", "run.n_samples=8", "--out",
                          (dir / "a").string(), "--jobs", "2", "--dump-latents"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    for (const char* f : {"samples.bin", "trace.jsonl", "report.csv", "effective-config.ini", "x0_steps.bin"}) {
        CHECK(fs::exists(dir / "a" / f));
    }
    std::ifstream bin(dir / "a" / "samples.bin", std::ios::binary);
    CHECK(read_grids(bin).size() == 8);
    std::ifstream x0s(dir / "a" / "x0_steps.bin", std::ios::binary);
    const auto snaps = read_grids(x0s);
    REQUIRE(snaps.size() == 20);
    CHECK(snaps.front().shape() == GridShape(8, 8, 1));
    CHECK(snaps.back().shape() == GridShape(16, 16, 1));

    const std::string trace = slurp(dir / "a" / "trace.jsonl");
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 21);
    CHECK(trace.find("\"low_res_steps\":10,\"full_res_steps\":10") != std::string::npos);
    CHECK(trace.rfind("{\"i\":1,\"t\":20,\"width\":8,\"height\":8,\"cfg_passes\":2,\"flops\":", 0) == 0);

    // override equivalence
    std::ofstream(dir / "s0.ini") << "[sampler]\ns = 0\n[run]\nn_samples = 4\n";
    REQUIRE(cli({"generate", "--config", (dir / "s0.ini").string(), "--out", (dir / "b").string()}).code == 0);
    REQUIRE(cli({"generate", "--set", "sampler.s=0", "--set", "run.n_samples=4", "--out", (dir / "c").string()})
                .code == 0);
    CHECK(slurp(dir / "b" / "samples.bin") == slurp(dir / "c" / "samples.bin"));
    CHECK(slurp(dir / "b" / "effective-config.ini") == slurp(dir / "c" / "effective-config.ini"));

    // a relative out in a config file is relative to that file
    fs::create_directories(dir / "e");
    std::ofstream(dir / "e" / "r.ini") << "[sampler]\ns = 0\n[run]\nn_samples = 4\nout = res\n";
    REQUIRE(cli({"generate", "--config", (dir / "e" / "r.ini").string()}).code == 0);
    CHECK(slurp(dir / "e" / "res" / "samples.bin") == slurp(dir / "b" / "samples.bin"));

    const auto bad = cli({"generate", "--set", "sampler.q=1", "--out", (dir / "d").string()});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("sampler.q") != std::string::npos);
    CHECK(cli({"generate", "--preset", "nope"}).code == 2);
    CHECK(cli({"generate", "--bogus-flag"}).code == 2);
    CHECK(cli({"generate", "--preset", "sd15-pd", "--config", "x.ini"}).code == 2);
}

TEST_CASE("sweep command") {
    const auto dir = scratch("sweep");
    auto r = cli({"sweep", "--axes", "s-grid", "--set", "run.n_samples=4", "--set", "sampler.beta=0.5", "--out",
                  (dir / "s").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string csv = slurp(dir / "s" / "report.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

    r = cli({"sweep", "--preset", "sdxl-pd", "--axes", "k-ablation", "--axis", "m=9,12,15,18", "--set",
             "run.n_samples=2", "--out", (dir / "km").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string km = slurp(dir / "km" / "report.csv");
    CHECK(std::count(km.begin(), km.end(), '\n') == 21);
    CHECK(km.find(",error\n") != std::string::npos);

    CHECK(cli({"sweep", "--out", (dir / "e").string()}).code == 2);
    CHECK(cli({"sweep", "--axis", "s=", "--out", (dir / "e").string()}).code == 2);
    CHECK(cli({"sweep", "--axis", "q=1", "--out", (dir / "e").string()}).code == 2);
    CHECK(cli({"sweep", "--axes", "nope", "--out", (dir / "e").string()}).code == 2);

    r = cli({"sweep", "--axis", "s=0,0.5", "--set", "sampler.beta=0.5", "--set", "sampler.class=0", "--set",
             "run.n_samples=4", "--set", "sweep.calibration_n=4", "--set", "sweep.evaluation_n=8", "--out",
             (dir / "cal").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(slurp(dir / "cal" / "calibration.json").find("\"spearman\"") != std::string::npos);
}

TEST_CASE("flops command") {
    const auto dir = scratch("flops");
    const auto r   = cli({"flops", "--preset", "sd15-pd", "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto run  = resolve(RunConfig::preset("sd15-pd"));
    const auto rows = flops_table(run);
    REQUIRE(rows.size() == 3 + 12 + 2);
    CHECK(rows[0].label == "Original");
    CHECK(rows[0].tflops == doctest::Approx(30.420).epsilon(0.01));
    CHECK(rows[1].tflops == rows[0].tflops / 2);
    CHECK(rows[2].tflops == doctest::Approx(17.787).epsilon(0.02));
    CHECK(r.out.find("Original w/o CFG") != std::string::npos);
    CHECK(fs::exists(dir / "flops.csv"));

    CHECK(cli({"flops", "--preset", "sd99-pd"}).code == 2);
    CHECK(cli({"flops", "--set", "model.cost=sd99-like"}).code == 2);
    const auto body = [](const std::string& s) { return s.substr(s.find('\n')); };
    CHECK(body(cli({"flops", "--set", "model.cost=" + std::string(POSTDIFF_SOURCE_DIR) + "/configs/sd15-like.cost"})
                   .out) == body(cli({"flops"}).out));
}

TEST_CASE("binary exit codes") {
    const std::string bin = POSTDIFF_CLI;
    CHECK(std::system((bin + " flops > /dev/null").c_str()) == 0);
    const int rc = std::system((bin + " generate --set sampler.q=1 2> /dev/null").c_str());
    CHECK(WEXITSTATUS(rc) == 2);
}
