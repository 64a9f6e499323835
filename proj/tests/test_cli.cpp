#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ammrg/cli.hpp"
#include "ammrg/roi_masking.hpp"
#include "support/test_support.hpp"

using nlohmann::json;

namespace {

struct Outcome {
    int code = -1;
    std::vector<json> records;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "ammrg");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Outcome o;
    o.code = ammrg::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    o.err = err.str();
    std::istringstream lines(out.str());
    for (std::string line; std::getline(lines, line);) {
        if (o.code == 0 && !line.empty() && line.front() == '{') o.records.push_back(json::parse(line));
    }
    return o;
}

/// Small images keep the end-to-end commands fast.
std::vector<std::string> small(std::vector<std::string> args) {
    for (const char* s : {"--set", "image_size=192", "--set", "n_cases=12", "--set", "d_out=32"}) args.push_back(s);
    return args;
}

} // namespace

// =============================================================================
// Usage errors
// =============================================================================

TEST(CliUsageTest, ExitCodes) {
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({"--help"}).code, 0);
    EXPECT_EQ(run({"sweep", "--param", "gamma"}).code, 2);
    EXPECT_EQ(run({"sweep", "--param", "beta", "--values", "1,x"}).code, 2);
    EXPECT_EQ(run({"sweep", "--param", "beta", "--seed", "nope"}).code, 2);
    EXPECT_EQ(run({"sweep", "--param", "beta", "--set", "beta"}).code, 2);
    EXPECT_EQ(run({"sweep", "--param", "beta", "--set", "unknown_key=1"}).code, 2);
    EXPECT_EQ(run({"sweep", "--param", "cap", "--beta", "-1"}).code, 2);
    EXPECT_EQ(run({"build-bank", "--kind", "audio", "--out", "x"}).code, 2);
    EXPECT_EQ(run({"gen-corpus"}).code, 2);
    EXPECT_EQ(run({"retrieve", "--bank", "/nonexistent/b.bank", "--config", "/nonexistent/c.cfg"}).code, 2);
}

TEST(CliUsageTest, RuntimeFailuresExitOne) {
    const auto o = run({"retrieve", "--bank", "/nonexistent/b.bank", "--entry", "0"});
    EXPECT_EQ(o.code, 1);
    EXPECT_NE(o.err.find("error:"), std::string::npos);
}

// =============================================================================
// Sweep
// =============================================================================

TEST(CliSweepTest, BetaGridRows) {
    const auto o = run({"sweep", "--param", "beta", "--values", "0.5,1,2,4,8,16", "--trials", "30"});
    ASSERT_EQ(o.code, 0) << o.err;
    ASSERT_EQ(o.records.size(), 6u);
    const std::vector<double> grid{0.5, 1, 2, 4, 8, 16};
    double prev = -1;
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(o.records[i]["param"], "beta");
        EXPECT_EQ(o.records[i]["value"].get<double>(), grid[i]);
        const double acc = o.records[i]["recovery_accuracy"].get<double>();
        if (grid[i] <= 8) EXPECT_GE(acc, prev);
        prev = acc;
    }
}

TEST(CliSweepTest, ConfigFileAndSeed) {
    testing_support::TempDir dir("cli_cfg");
    std::ofstream(dir / "s.cfg") << "seed = 4\n";
    const auto a = run({"sweep", "--param", "beta", "--values", "4", "--trials", "5", "--config", (dir / "s.cfg").string()});
    const auto b = run({"sweep", "--param", "beta", "--values", "4", "--trials", "5", "--seed", "4"});
    ASSERT_EQ(a.code, 0) << a.err;
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(a.records, b.records);
}

// =============================================================================
// End to end through files
// =============================================================================

TEST(CliFlowTest, CorpusTrainBanksRetrievePipeline) {
    testing_support::TempDir dir("cli_flow");
    const std::string corpus = (dir / "corpus").string();
    const std::string clf = (dir / "clf.bin").string();
    const std::string vbank = (dir / "visual.bank").string();
    const std::string rbank = (dir / "report.bank").string();

    auto gen = run(small({"gen-corpus", "--out", corpus}));
    ASSERT_EQ(gen.code, 0) << gen.err;
    EXPECT_EQ(gen.records.at(0)["cases"], 12);

    auto train = run(small({"train", "--corpus", corpus, "--out", clf}));
    ASSERT_EQ(train.code, 0) << train.err;
    EXPECT_LT(train.records.at(0)["loss_final"].get<double>(), train.records.at(0)["loss_initial"].get<double>());

    auto vb = run(small({"build-bank", "--kind", "visual", "--corpus", corpus, "--classifier", clf, "--out", vbank}));
    ASSERT_EQ(vb.code, 0) << vb.err;
    EXPECT_GT(vb.records.at(0)["entries"].get<int>(), 0);
    EXPECT_EQ(vb.records.at(0)["dim"], 768);

    auto rb = run(small({"build-bank", "--kind", "report", "--corpus", corpus, "--out", rbank, "--report-size", "10"}));
    ASSERT_EQ(rb.code, 0) << rb.err;
    EXPECT_LE(rb.records.at(0)["entries"].get<int>(), 10);

    auto ret = run({"retrieve", "--bank", rbank, "--entry", "0", "--beta", "2000", "--top", "3"});
    ASSERT_EQ(ret.code, 0) << ret.err;
    EXPECT_EQ(ret.records.at(0)["top"].size(), 3u);
    EXPECT_EQ(ret.records.at(0)["top"][0]["index"], 0);

    EXPECT_EQ(run({"retrieve", "--bank", rbank}).code, 2);
    EXPECT_EQ(run({"retrieve", "--bank", rbank, "--entry", "100000"}).code, 2);

    auto pipe = run(small({"pipeline", "--corpus", corpus, "--classifier", clf, "--ablate", "all", "--out",
                           (dir / "out").string()}));
    ASSERT_EQ(pipe.code, 0) << pipe.err;
    ASSERT_EQ(pipe.records.size(), 4u);
    EXPECT_EQ(pipe.records[0]["ablation"], "none");
    EXPECT_EQ(pipe.records[3]["ablation"], "both");
    EXPECT_GE(pipe.records[3]["bleu1"].get<double>(), 0.95);
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "reports_both.txt"));

    auto again = run(small({"pipeline", "--corpus", corpus, "--classifier", clf, "--ablate", "all", "--out",
                            (dir / "out").string()}));
    EXPECT_EQ(again.records, pipe.records);

    auto ev = run({"evaluate", "--candidates", (dir / "out" / "reports_both.txt").string(), "--references",
                   (dir / "out" / "reports_both.txt").string()});
    ASSERT_EQ(ev.code, 0) << ev.err;
    EXPECT_EQ(ev.records.at(0)["bleu1"].get<double>(), 1.0);
    EXPECT_EQ(ev.records.at(0)["rouge_l"].get<double>(), 1.0);

    EXPECT_EQ(run({"evaluate", "--candidates", corpus + "/reports.txt", "--references", corpus + "/reports.txt",
                   "--pred-labels", corpus + "/labels.csv"})
                  .code,
              2);
    auto ce = run({"evaluate", "--candidates", corpus + "/reports.txt", "--references", corpus + "/reports.txt",
                   "--pred-labels", corpus + "/labels.csv", "--true-labels", corpus + "/labels.csv"});
    ASSERT_EQ(ce.code, 0) << ce.err;
    EXPECT_EQ(ce.records.at(0)["ce_f1"].get<double>(), 1.0);

    auto cam = run({"cam", "--classifier", clf, "--image", corpus + "/images/case0000.img", "--class", "1", "--out",
                    (dir / "cam.map").string()});
    ASSERT_EQ(cam.code, 0) << cam.err;
    EXPECT_EQ(cam.records.at(0)["patch_means"].size(), 144u);

    auto mask = run({"mask", "--image", corpus + "/images/case0000.img", "--map", (dir / "cam.map").string(), "--out",
                     (dir / "masked.img").string(), "--tau", "0.5"});
    ASSERT_EQ(mask.code, 0) << mask.err;
    const auto masked = ammrg::roi::load_raster(dir / "masked.img");
    EXPECT_EQ(masked.height, 192u);
}

TEST(CliFlowTest, MaskSelectsAboveThreshold) {
    testing_support::TempDir dir("cli_mask");
    ammrg::roi::Raster img{32, 32, 1, std::vector<double>(32 * 32, 0.5)};
    ammrg::roi::Raster map{32, 32, 1, std::vector<double>(32 * 32, 0.0)};
    for (std::size_t y = 16; y < 32; ++y)
        for (std::size_t x = 0; x < 16; ++x) map.values[y * 32 + x] = 0.8;
    ammrg::roi::save_raster(img, dir / "i.img");
    ammrg::roi::save_raster(map, dir / "m.map");
    const auto o = run({"mask", "--image", (dir / "i.img").string(), "--map", (dir / "m.map").string(), "--out",
                        (dir / "o.img").string(), "--set", "patch_size=16", "--top-k", "1"});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(o.records.at(0)["selected"], json::array({2}));
    EXPECT_DOUBLE_EQ(o.records.at(0)["kept_fraction"].get<double>(), 0.25);
    const auto out = ammrg::roi::load_raster(dir / "o.img");
    EXPECT_EQ(out.values[16 * 32], 0.5f);
    EXPECT_EQ(out.values[0], 0.0);
}
