// Command-line front end for the contribution-evaluation library:
//   run          execute the paired baseline/pruned pipelines and write reports
//   compare      diff the normalized contributions of two finished runs
//   easy-scale   track how the consistently-correct validation share grows
//   oracle-check recompute a utility table's Shapley values two ways
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpvs/dpvs.hpp"

namespace {

using dpvs::ExperimentConfig;

std::string fmt(double v) { return ExperimentConfig::formatNumber(v); }

nlohmann::json readJsonFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return nlohmann::json::parse(in);
}

ExperimentConfig loadConfig(const std::string& path, const CLI::App& cmd, std::uint64_t seed,
                            const std::string& out) {
    ExperimentConfig cfg = ExperimentConfig::load(path);
    if (cmd.count("--seed") > 0) cfg.masterSeed = seed;
    if (cmd.count("--out") > 0) cfg.outputDir = out;
    return cfg;
}

std::vector<double> normalizedColumn(const std::string& dir, const char* key) {
    const auto metrics = readJsonFile((std::filesystem::path(dir) / "metrics.json").string());
    if (!metrics.contains(key))
        throw std::runtime_error(dir + "/metrics.json has no '" + key + "' entry");
    return metrics.at(key).get<std::vector<double>>();
}

int runCommand(const std::string& configPath, const CLI::App& cmd, std::uint64_t seed,
               const std::string& out, int threads) {
    const ExperimentConfig cfg = loadConfig(configPath, cmd, seed, out);
    const dpvs::ExperimentResult result = dpvs::runExperiment(cfg, threads);
    dpvs::emitReports(result, cfg.outputDir);

    std::cout << "rounds: " << result.rounds.size() << "\n"
              << "clients: " << cfg.data.numClients << "\n"
              << "evaluated samples (baseline): " << result.baselineSamples << "\n"
              << "evaluated samples (pruned):   " << result.dpvsSamples << "\n"
              << "time saving %:      " << fmt(result.metrics.timeSavingPercent) << "\n"
              << "cosine distance:    " << fmt(result.metrics.cosineDistance) << "\n"
              << "euclidean distance: " << fmt(result.metrics.euclideanDistance) << "\n"
              << "max difference:     " << fmt(result.metrics.maximumDifference) << "\n"
              << "reports: " << cfg.outputDir << "\n";
    return 0;
}

int compareCommand(const std::string& dirA, const std::string& dirB) {
    const auto a = normalizedColumn(dirA, "phi_dpvs_normalized");
    const auto b = normalizedColumn(dirB, "phi_dpvs_normalized");
    if (a.size() != b.size())
        throw std::runtime_error("runs disagree on client count (" + std::to_string(a.size()) +
                                 " vs " + std::to_string(b.size()) + ")");

    std::cout << "clients: " << a.size() << "\n"
              << "cosine distance:    " << fmt(dpvs::cosineDistance(a, b)) << "\n"
              << "euclidean distance: " << fmt(dpvs::euclideanDistance(a, b)) << "\n"
              << "max difference:     " << fmt(dpvs::maximumDifference(a, b)) << "\n";
    for (std::size_t i = 0; i < a.size(); ++i)
        std::cout << "client " << i << ": " << fmt(a[i]) << " vs " << fmt(b[i]) << "\n";
    return 0;
}

int easyScaleCommand(const std::string& configPath, const CLI::App& cmd, std::uint64_t seed,
                     const std::string& out) {
    const ExperimentConfig cfg = loadConfig(configPath, cmd, seed, out);
    const dpvs::EasyScaleResult result = dpvs::runEasyScale(cfg);
    const auto csvPath = std::filesystem::path(cfg.outputDir) / "easy_scale.csv";
    dpvs::writeEasyScaleCsv(result, csvPath.string());

    std::cout << "epochs: " << result.rows.size() << "\n";
    if (!result.rows.empty())
        std::cout << "final accuracy %: " << fmt(result.rows.back().accuracy) << "\n";
    std::cout << "final easy fraction: " << fmt(result.finalEasyFraction) << "\n"
              << "rows: " << csvPath.string() << "\n";
    return 0;
}

// Checks one table: the closed-form subset sum must agree with the
// brute-force permutation average to within tolerance.
bool checkTable(const std::string& label, const dpvs::UtilityTable& table, double tolerance) {
    const auto direct = dpvs::shapleyFromTable(table);
    const auto oracle = dpvs::shapleyPermutationOracle(table);
    double worst = 0.0;
    for (std::size_t i = 0; i < direct.size(); ++i)
        worst = std::max(worst, std::abs(direct[i] - oracle[i]));
    const bool ok = worst <= tolerance;
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << label << ": max |direct - oracle| = "
              << fmt(worst) << " (tolerance " << fmt(tolerance) << ")\n";
    return ok;
}

int oracleCheckCommand(const std::string& path) {
    constexpr double kTolerance = 1e-9;
    const nlohmann::json j = readJsonFile(path);

    bool allOk = true;
    bool found = false;
    if (j.contains("utility")) {
        found = true;
        allOk = checkTable("table", dpvs::utilityTableFromJson(j), kTolerance);
    } else {
        for (const char* key : {"baseline", "dpvs"}) {
            if (!j.contains(key)) continue;
            found = true;
            allOk = checkTable(key, dpvs::utilityTableFromJson(j.at(key)), kTolerance) && allOk;
        }
    }
    if (!found)
        throw std::runtime_error(path + ": expected a utility table or a round report with "
                                        "'baseline'/'dpvs' tables");
    return allOk ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated contribution evaluation with pruned validation"};
    app.require_subcommand(1);

    std::string configPath, outDir, dirA, dirB, tablePath;
    std::uint64_t seed = 0;
    int threads = 1;

    CLI::App* run = app.add_subcommand("run", "execute one experiment and write its reports");
    run->add_option("config", configPath, "experiment configuration file")->required();
    run->add_option("--seed", seed, "override the master seed");
    run->add_option("--out", outDir, "override the output directory");
    run->add_option("--threads", threads, "worker threads for coalition scoring")
        ->check(CLI::PositiveNumber);

    CLI::App* compare = app.add_subcommand("compare", "diff the contributions of two runs");
    compare->add_option("dirA", dirA, "first run's report directory")->required();
    compare->add_option("dirB", dirB, "second run's report directory")->required();

    CLI::App* easyScale =
        app.add_subcommand("easy-scale", "centralized training study of the easy-sample share");
    easyScale->add_option("config", configPath, "experiment configuration file")->required();
    easyScale->add_option("--seed", seed, "override the master seed");
    easyScale->add_option("--out", outDir, "override the output directory");

    CLI::App* oracle =
        app.add_subcommand("oracle-check", "verify Shapley values against the permutation oracle");
    oracle->add_option("tables", tablePath, "utilities JSON (bare table or round report)")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return runCommand(configPath, *run, seed, outDir, threads);
        if (compare->parsed()) return compareCommand(dirA, dirB);
        if (easyScale->parsed()) return easyScaleCommand(configPath, *easyScale, seed, outDir);
        if (oracle->parsed()) return oracleCheckCommand(tablePath);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
