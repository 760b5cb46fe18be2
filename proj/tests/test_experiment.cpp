#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dpvs/experiment.hpp"

using namespace dpvs;
namespace fs = std::filesystem;

namespace {

ExperimentConfig smallConfig() {
    ExperimentConfig cfg;
    cfg.rounds = 8;
    cfg.masterSeed = 4242;
    cfg.data.source = DataSource::Blobs;
    cfg.data.scheme = SchemeKind::SDSS;
    cfg.data.numClients = 3;
    cfg.data.numSamples = 150;
    cfg.data.numClasses = 3;
    cfg.data.inputDim = 4;
    cfg.data.separation = 6.0;
    cfg.data.validationFraction = 0.2;
    cfg.hiddenDim = 0;
    cfg.train.localEpochs = 2;
    cfg.train.learningRate = 0.1;
    cfg.train.batchSize = 16;
    cfg.ledger.beta = 0.9;
    cfg.ledger.windowCorrect = 2;
    cfg.ledger.windowConfidence = 2;
    cfg.prune.strategy = PruneStrategy::Random;
    cfg.prune.timing = UpdateTiming::EE;
    cfg.prune.ratios = {1.0, 0.5, 0.2};
    cfg.prune.startDynamicEpoch = 2;
    return cfg;
}

std::string readFile(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

int countLines(const std::string& text) {
    int lines = 0;
    for (char c : text)
        if (c == '\n') ++lines;
    return lines;
}

fs::path freshDir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "dpvs_experiment_tests" / leaf;
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("side-by-side pipelines produce a full result") {
    const auto cfg = smallConfig();
    const auto result = runExperiment(cfg);

    REQUIRE(result.rounds.size() == 8);
    CHECK(result.ledger.rounds() == 8);
    CHECK(result.baselineContrib.rounds == 8);
    CHECK(result.dpvsContrib.rounds == 8);

    // 30 validation samples, 8 coalition masks, 8 rounds, no pruning.
    CHECK(result.baselineSamples == 30 * 8 * 8);
    CHECK(result.dpvsSamples <= result.baselineSamples);
    CHECK(result.dpvsSamples >= 2 * 8 * 30);  // warm-up rounds are never pruned

    for (const RoundArtifacts& art : result.rounds) {
        REQUIRE(art.phiBaseline.size() == 3);
        REQUIRE(art.phiDpvs.size() == 3);
        for (double u : art.baseline.utility) {
            REQUIRE(u >= 0.0);
            REQUIRE(u <= 100.0);
        }
    }

    const double baseSum = std::accumulate(result.baselineNormalized.begin(),
                                           result.baselineNormalized.end(), 0.0);
    const double dpvsSum =
        std::accumulate(result.dpvsNormalized.begin(), result.dpvsNormalized.end(), 0.0);
    CHECK_THAT(baseSum, Catch::Matchers::WithinAbs(100.0, 1e-9));
    CHECK_THAT(dpvsSum, Catch::Matchers::WithinAbs(100.0, 1e-9));

    CHECK(result.metrics.timeSavingPercent ==
          timeSaving(result.baselineSamples, result.dpvsSamples));

    SECTION("warm-up rounds reuse the unpruned schedule exactly") {
        for (int t = 0; t < cfg.prune.startDynamicEpoch; ++t) {
            CHECK(result.rounds[static_cast<std::size_t>(t)].baseline.utility ==
                  result.rounds[static_cast<std::size_t>(t)].dpvs.utility);
        }
    }

    SECTION("dynamic rounds do less validation work") {
        CHECK(result.dpvsSamples < result.baselineSamples);
        CHECK(result.metrics.timeSavingPercent > 0.0);
    }
}

TEST_CASE("full extraction ratios reproduce the baseline bit for bit") {
    auto cfg = smallConfig();
    cfg.prune.ratios = {1.0, 1.0, 1.0};
    const auto result = runExperiment(cfg);

    CHECK(result.baselineNormalized == result.dpvsNormalized);
    CHECK(result.baselineSamples == result.dpvsSamples);
    CHECK(result.metrics.timeSavingPercent == 0.0);
    CHECK(result.metrics.cosineDistance == 0.0);
    CHECK(result.metrics.euclideanDistance == 0.0);
    CHECK(result.metrics.maximumDifference == 0.0);
    for (const RoundArtifacts& art : result.rounds) {
        CHECK(art.baseline.utility == art.dpvs.utility);
        CHECK(art.phiBaseline == art.phiDpvs);
    }
}

TEST_CASE("runs are deterministic and thread-count independent") {
    const auto cfg = smallConfig();
    const auto first = runExperiment(cfg);
    const auto second = runExperiment(cfg);
    const auto threaded = runExperiment(cfg, 3);

    CHECK(first.baselineNormalized == second.baselineNormalized);
    CHECK(first.dpvsNormalized == second.dpvsNormalized);
    CHECK(first.dpvsSamples == second.dpvsSamples);
    CHECK(first.ledger.toJson() == second.ledger.toJson());

    CHECK(first.baselineNormalized == threaded.baselineNormalized);
    CHECK(first.dpvsNormalized == threaded.dpvsNormalized);
    CHECK(first.dpvsSamples == threaded.dpvsSamples);
    for (std::size_t t = 0; t < first.rounds.size(); ++t) {
        CHECK(first.rounds[t].baseline.utility == threaded.rounds[t].baseline.utility);
        CHECK(first.rounds[t].dpvs.utility == threaded.rounds[t].dpvs.utility);
    }

    SECTION("the master seed matters") {
        // On a task this separable both seeds converge to near-uniform
        // contributions, so compare the recorded confidences instead: they
        // reflect the seed through the data, the init, and the training.
        auto other = cfg;
        other.masterSeed = 31337;
        const auto different = runExperiment(other);
        CHECK(different.ledger.toJson() != first.ledger.toJson());
    }

    SECTION("thread count must be positive") {
        CHECK_THROWS_AS(runExperiment(cfg, 0), std::invalid_argument);
    }
}

TEST_CASE("shared-plan timing evaluates the same subset for every coalition") {
    auto cfg = smallConfig();
    cfg.prune.timing = UpdateTiming::ET;
    cfg.prune.ratios = {0.2, 0.2, 0.2};
    const auto result = runExperiment(cfg);

    for (std::size_t t = static_cast<std::size_t>(cfg.prune.startDynamicEpoch);
         t < result.rounds.size(); ++t) {
        const auto& counts = result.rounds[t].dpvs.evaluatedSamples;
        for (int c : counts) CHECK(c == counts[0]);
    }
    CHECK(result.dpvsSamples < result.baselineSamples);
}

TEST_CASE("report tree", "[reports]") {
    auto cfg = smallConfig();
    cfg.rounds = 4;
    const auto result = runExperiment(cfg);

    const fs::path dir = freshDir("tree");
    emitReports(result, dir.string());

    SECTION("expected files exist") {
        for (const char* leaf : {"contributions.csv", "metrics.json", "metrics.csv",
                                 "ledger.json", "config_echo.ini", "timings.json"})
            CHECK(fs::exists(dir / leaf));
        for (int t = 0; t < 4; ++t)
            CHECK(fs::exists(dir / "utilities" / ("round_" + std::to_string(t) + ".json")));
    }

    SECTION("contribution rows cover every round and client") {
        const std::string csv = readFile(dir / "contributions.csv");
        CHECK(countLines(csv) == 1 + 4 * 3);
        CHECK(csv.rfind("round,client,phiBaseline,phiDpvs\n", 0) == 0);
    }

    SECTION("metrics file carries the summary") {
        const auto m = nlohmann::json::parse(readFile(dir / "metrics.json"));
        CHECK(m.at("rounds") == 4);
        CHECK(m.at("evaluated_samples_baseline").get<long long>() == result.baselineSamples);
        CHECK(m.at("evaluated_samples_dpvs").get<long long>() == result.dpvsSamples);
        CHECK(m.at("phi_baseline").size() == 3);
        CHECK(m.at("phi_dpvs_normalized").size() == 3);
        CHECK(m.at("cosine_distance").get<double>() == result.metrics.cosineDistance);
        CHECK(m.at("time_saving_percent").get<double>() == result.metrics.timeSavingPercent);
    }

    SECTION("round files parse back into tables") {
        const auto j = nlohmann::json::parse(readFile(dir / "utilities" / "round_2.json"));
        CHECK(j.at("round") == 2);
        const auto baseline = utilityTableFromJson(j.at("baseline"));
        const auto dpvs = utilityTableFromJson(j.at("dpvs"));
        CHECK(baseline.utility == result.rounds[2].baseline.utility);
        CHECK(dpvs.utility == result.rounds[2].dpvs.utility);
    }

    SECTION("echoed config parses and matches the run") {
        const auto echoed = ExperimentConfig::load((dir / "config_echo.ini").string());
        CHECK(echoed.rounds == 4);
        CHECK(echoed.masterSeed == cfg.masterSeed);
        CHECK(echoed.prune.ratios == cfg.prune.ratios);
    }

    SECTION("ledger file restores the recorded history") {
        const auto ledger =
            ValidationLedger::fromJson(nlohmann::json::parse(readFile(dir / "ledger.json")));
        CHECK(ledger.rounds() == 4);
        CHECK(ledger.numSamples() == 30);
    }

    SECTION("reruns write byte-identical reports apart from timings") {
        const auto again = runExperiment(cfg);
        const fs::path dir2 = freshDir("tree-rerun");
        emitReports(again, dir2.string());
        for (const char* leaf :
             {"contributions.csv", "metrics.json", "metrics.csv", "ledger.json", "config_echo.ini"})
            CHECK(readFile(dir / leaf) == readFile(dir2 / leaf));
        for (int t = 0; t < 4; ++t) {
            const std::string leaf = "round_" + std::to_string(t) + ".json";
            CHECK(readFile(dir / "utilities" / leaf) == readFile(dir2 / "utilities" / leaf));
        }
    }

    SECTION("nested output directories are created on demand") {
        const fs::path deep = freshDir("deep") / "a" / "b";
        emitReports(result, deep.string());
        CHECK(fs::exists(deep / "metrics.json"));
    }
}

TEST_CASE("easy-set growth study") {
    auto cfg = smallConfig();
    cfg.rounds = 6;
    const auto result = runEasyScale(cfg);

    REQUIRE(result.rows.size() == 6);
    for (int t = 0; t < 6; ++t) CHECK(result.rows[static_cast<std::size_t>(t)].epoch == t);

    // The split needs windowCorrect epochs of history.
    CHECK(result.rows[0].easyFraction == -1.0);
    for (std::size_t t = 1; t < result.rows.size(); ++t) {
        CHECK(result.rows[t].easyFraction >= 0.0);
        CHECK(result.rows[t].easyFraction <= 1.0);
    }
    CHECK(result.finalEasyFraction == result.rows.back().easyFraction);

    // Separable data converges, so most samples become easy.
    CHECK(result.rows.back().accuracy > 80.0);
    CHECK(result.finalEasyFraction > 0.5);

    SECTION("csv export") {
        const fs::path path = freshDir("easy") / "easy_scale.csv";
        writeEasyScaleCsv(result, path.string());
        const std::string csv = readFile(path);
        CHECK(csv.rfind("epoch,accuracy,easy_fraction\n", 0) == 0);
        CHECK(countLines(csv) == 1 + 6);
        CHECK(csv.find("\n0,") != std::string::npos);
        CHECK(csv.find(",-1\n") != std::string::npos);  // epoch before the window fills
    }

    SECTION("deterministic rows") {
        const auto again = runEasyScale(cfg);
        REQUIRE(again.rows.size() == result.rows.size());
        for (std::size_t t = 0; t < result.rows.size(); ++t) {
            CHECK(again.rows[t].accuracy == result.rows[t].accuracy);
            CHECK(again.rows[t].easyFraction == result.rows[t].easyFraction);
        }
    }
}
