// Drives the built biphoton executable through a shell.

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "biphoton/pipeline.hpp"

using namespace biphoton;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(BIPHOTON_CLI) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("biphoton_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

const std::string kQuick = "--duration-s 5 --pair-rate-hz 2000";

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(run("--help").code, 0);
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("simulate --no-such-flag 1").code, 1);
    EXPECT_EQ(run("simulate --gamma abc").code, 1);
    const auto r = run("simulate --tau-window-ns 50 --output-dir " + temp_dir("usage").string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("error"), std::string::npos);
}

TEST(Cli, ConfigFileThenFlags) {
    const auto dir = temp_dir("config");
    write_atomic(dir / "c.json", "{\"duration_s\": 5, \"seed\": 11, \"output_dir\": \"" + (dir / "run").string() + "\"}");
    ASSERT_EQ(run("simulate --config " + (dir / "c.json").string() + " --seed 12").code, 0);
    const auto m = read_json(dir / "run" / "manifest.json");
    EXPECT_EQ(m.at("config").at("seed"), 12);
    EXPECT_EQ(m.at("config").at("duration_s"), 5.0);

    write_atomic(dir / "bad.json", "{\"durration_s\": 5}");
    EXPECT_EQ(run("simulate --config " + (dir / "bad.json").string()).code, 1);
}

TEST(Cli, StepwiseEqualsPipeline) {
    const auto dir = temp_dir("steps");
    const auto single = dir / "single", steps = dir / "steps";
    ASSERT_EQ(run("pipeline " + kQuick + " --output-dir " + single.string()).code, 0);

    ASSERT_EQ(run("simulate " + kQuick + " --output-dir " + steps.string()).code, 0);
    ASSERT_EQ(run("correlate --manifest " + (steps / "manifest.json").string()).code, 0);
    std::string hists;
    for (int k = 0; k < 3; ++k) hists += " " + (steps / ("histogram_phi" + std::to_string(k) + ".json")).string();
    ASSERT_EQ(run("reconstruct --gamma-mode pooled --histograms" + hists + " --out " +
                  (steps / "reconstruction.json").string())
                  .code,
              0);
    ASSERT_EQ(run("fit --reconstruction " + (steps / "reconstruction.json").string() + " --out " +
                  (steps / "fit.json").string())
                  .code,
              0);
    // The manifests differ only in the recorded output directory.
    auto m1 = read_json(single / "manifest.json"), m2 = read_json(steps / "manifest.json");
    m1["config"].erase("output_dir");
    m2["config"].erase("output_dir");
    EXPECT_EQ(m1, m2);
    for (const char* name : {"histogram_phi0.json", "histogram_phi2.json", "reconstruction.json",
                             "fit.json", "tags/phi1_A.bttg"}) {
        EXPECT_EQ(slurp(single / name), slurp(steps / name)) << name;
    }
}

TEST(Cli, SingleFileCorrelateMatchesManifestRun) {
    const auto dir = temp_dir("single_corr");
    ASSERT_EQ(run("simulate " + kQuick + " --output-dir " + dir.string()).code, 0);
    ASSERT_EQ(run("correlate --manifest " + (dir / "manifest.json").string()).code, 0);
    const auto r = run("correlate --phi-setting 1 --acquisition-time-s 5 --input " + (dir / "tags/phi1_A.bttg").string() +
                       " " + (dir / "tags/phi1_B.bttg").string());
    ASSERT_EQ(r.code, 0) << r.out;
    const auto direct = Json::parse(r.out);
    const auto via_manifest = read_json(dir / "histogram_phi1.json");
    EXPECT_EQ(direct.at("counts"), via_manifest.at("counts"));
    EXPECT_EQ(direct.at("setting"), via_manifest.at("setting"));
    EXPECT_EQ(run("correlate --phi-setting 1 --phi-rad 0.2 --input " + (dir / "tags/phi1_A.bttg").string()).code, 1);
}

TEST(Cli, MalformedTagFileIsDataError) {
    const auto dir = temp_dir("malformed");
    std::string bytes = "BTTG";
    bytes += std::string("\x01\x00\x00\x00", 4);
    bytes += std::string("\x01\x00\x00\x00\x00\x00\x00\x00", 8);
    bytes += std::string("\x05\x00\x00\x00\x00\x00\x00\x00\x00", 9);  // channel 5
    write_atomic(dir / "bad.bttg", bytes);
    const auto r = run("correlate --input " + (dir / "bad.bttg").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("byte offset 16"), std::string::npos) << r.out;
}

TEST(Cli, TooManyInvalidBinsIsNumericalError) {
    const auto dir = temp_dir("numerical");
    ASSERT_EQ(run("simulate " + kQuick + " --output-dir " + dir.string()).code, 0);
    ASSERT_EQ(run("correlate --manifest " + (dir / "manifest.json").string()).code, 0);
    auto h = read_json(dir / "histogram_phi1.json");
    auto counts = h.at("counts").get<std::vector<std::uint64_t>>();
    for (std::size_t i = 0; i < 60; ++i) counts[i] = 0;
    h["counts"] = counts;
    write_json(dir / "histogram_phi1.json", h);
    const auto r = run("reconstruct --gamma-mode per_bin --histograms " + (dir / "histogram_phi0.json").string() + " " +
                       (dir / "histogram_phi1.json").string() + " " + (dir / "histogram_phi2.json").string());
    EXPECT_EQ(r.code, 3) << r.out;
}

TEST(Cli, MismatchedHistogramsAreDataError) {
    const auto dir = temp_dir("mismatch");
    ASSERT_EQ(run("simulate " + kQuick + " --output-dir " + dir.string()).code, 0);
    ASSERT_EQ(run("correlate --manifest " + (dir / "manifest.json").string()).code, 0);
    // Same setting three times: the triple metadata check rejects it.
    const auto p0 = (dir / "histogram_phi0.json").string();
    EXPECT_EQ(run("reconstruct --histograms " + p0 + " " + p0 + " " + p0).code, 2);
    EXPECT_EQ(run("reconstruct --histograms " + p0 + " " + p0).code, 1);
}

TEST(Cli, VisibilityWritesFit) {
    const auto dir = temp_dir("vis");
    const auto r = run("visibility --settings 4 --duration-s 5 --phase-rad 3.141592653589793 --out " +
                       (dir / "v.json").string());
    ASSERT_EQ(r.code, 0) << r.out;
    const auto v = read_json(dir / "v.json");
    EXPECT_EQ(v.at("points").size(), 4U);
    EXPECT_EQ(v.at("fit").at("model"), "visibility");
}
