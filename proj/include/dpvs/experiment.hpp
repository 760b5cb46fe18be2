#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dpvs/config.hpp"
#include "dpvs/dataset.hpp"
#include "dpvs/ledger.hpp"
#include "dpvs/metrics.hpp"
#include "dpvs/model.hpp"
#include "dpvs/pruner.hpp"
#include "dpvs/rng.hpp"
#include "dpvs/shapley.hpp"

namespace dpvs {

/// Everything produced in one federated round, kept for the report files.
struct RoundArtifacts {
    int round = 0;
    UtilityTable baseline;
    UtilityTable dpvs;
    std::vector<double> phiBaseline;
    std::vector<double> phiDpvs;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<RoundArtifacts> rounds;
    ContributionVector baselineContrib;
    ContributionVector dpvsContrib;
    std::vector<double> baselineNormalized;
    std::vector<double> dpvsNormalized;
    long long baselineSamples = 0;  // validation evaluations, summed over coalitions
    long long dpvsSamples = 0;
    double baselineSeconds = 0.0;  // wall clock, informational only
    double dpvsSeconds = 0.0;
    MetricReport metrics;
    ValidationLedger ledger;

    explicit ExperimentResult(ValidationLedger initialLedger) : ledger(std::move(initialLedger)) {}
};

namespace detail {

inline LabeledDataset buildSourceDataset(const ExperimentConfig& cfg) {
    if (cfg.data.source == DataSource::Csv) return loadCsv(cfg.data.csvPath);
    return makeBlobs(cfg.data.numSamples, cfg.data.numClasses, cfg.data.inputDim,
                     cfg.data.separation, deriveSeed(cfg.masterSeed, "data"));
}

inline double secondsSince(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

/// Runs the baseline pipeline (every coalition scored on the whole
/// validation set) and the pruned pipeline side by side on one shared model
/// trajectory. Client updates are trained once per round and reused by both,
/// so any contribution difference comes from validation pruning alone.
inline ExperimentResult runExperiment(const ExperimentConfig& cfg, int threads = 1) {
    cfg.validate();
    if (threads < 1) throw std::invalid_argument("runExperiment: threads must be >= 1");

    const LabeledDataset source = detail::buildSourceDataset(cfg);
    auto [validation, trainPool] =
        splitValidation(source, cfg.data.validationFraction, deriveSeed(cfg.masterSeed, "valsplit"));

    PartitionScheme scheme;
    scheme.kind = cfg.data.scheme;
    scheme.numClients = cfg.data.numClients;
    scheme.sizeWeights = cfg.data.sizeWeights;
    scheme.classSkew = cfg.data.classSkew;
    scheme.noiseLevels = cfg.data.noiseLevels;
    const std::vector<LabeledDataset> shards =
        partition(trainPool, scheme, deriveSeed(cfg.masterSeed, "partition"));

    const ModelLayout layout{source.numFeatures, cfg.hiddenDim, source.numClasses};
    ModelParams model = initModel(layout, deriveSeed(cfg.masterSeed, "init"));

    ValidationLedger::Params ledgerParams = cfg.ledger;
    ledgerParams.startDynamicEpoch = cfg.prune.startDynamicEpoch;
    ExperimentResult result(
        ValidationLedger(static_cast<int>(validation.size()), ledgerParams));
    result.config = cfg;

    PruneConfig prune = cfg.prune;
    prune.seed = deriveSeed(cfg.masterSeed, "prune");

    const int n = cfg.data.numClients;
    result.baselineContrib.perClient.assign(static_cast<std::size_t>(n), 0.0);
    result.dpvsContrib.perClient.assign(static_cast<std::size_t>(n), 0.0);

    const std::vector<PrunePlan> fullSchedule(std::size_t{1} << n,
                                              detail::fullPlan(static_cast<int>(validation.size())));

    for (int t = 0; t < cfg.rounds; ++t) {
        std::vector<GradientUpdate> updates;
        updates.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            TrainOptions opt;
            opt.epochs = cfg.train.localEpochs;
            opt.learningRate = cfg.train.learningRate;
            opt.batchSize = cfg.train.batchSize;
            opt.seed = deriveSeed(cfg.masterSeed, "client", static_cast<std::uint64_t>(i),
                                  static_cast<std::uint64_t>(t));
            updates.push_back(localTrain(model, shards[static_cast<std::size_t>(i)], opt, i, t));
        }

        const auto baselineStart = std::chrono::steady_clock::now();
        UtilityBuildResult baselineBuild =
            buildUtilityTable(model, updates, fullSchedule, validation, threads);
        result.baselineSeconds += detail::secondsSince(baselineStart);

        const bool warmup = t < cfg.prune.startDynamicEpoch;
        const auto dpvsStart = std::chrono::steady_clock::now();
        const std::vector<PrunePlan>& dpvsSchedule =
            warmup ? fullSchedule : planSchedule(result.ledger, prune, n, t);
        UtilityBuildResult dpvsBuild =
            buildUtilityTable(model, updates, dpvsSchedule, validation, threads);
        result.dpvsSeconds += detail::secondsSince(dpvsStart);

        if (warmup)
            result.ledger.appendFullRecord(dpvsBuild.grandRecords);
        else
            result.ledger.appendPrunedRecord(dpvsBuild.grandRecords);

        RoundArtifacts art;
        art.round = t;
        art.phiBaseline = shapleyFromTable(baselineBuild.table);
        art.phiDpvs = shapleyFromTable(dpvsBuild.table);
        result.baselineContrib = accumulate(result.baselineContrib, art.phiBaseline);
        result.dpvsContrib = accumulate(result.dpvsContrib, art.phiDpvs);
        for (int c : baselineBuild.table.evaluatedSamples) result.baselineSamples += c;
        for (int c : dpvsBuild.table.evaluatedSamples) result.dpvsSamples += c;
        art.baseline = std::move(baselineBuild.table);
        art.dpvs = std::move(dpvsBuild.table);
        result.rounds.push_back(std::move(art));

        // The grand-coalition aggregate is the next round's shared base.
        model = reconstructCoalitionModel(model, updates);
    }

    result.baselineNormalized = normalizeContributions(result.baselineContrib);
    result.dpvsNormalized = normalizeContributions(result.dpvsContrib);
    result.metrics = compareContributions(result.baselineNormalized, result.dpvsNormalized,
                                          result.baselineSamples, result.dpvsSamples);
    return result;
}

namespace detail {

inline void writeTextFile(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace detail

/// Writes the report tree under outDir:
///   contributions.csv      per-round, per-client values for both pipelines
///   utilities/round_<t>.json  both coalition-utility tables for round t
///   metrics.json, metrics.csv  distances and sample-count time saving
///   ledger.json            judge and confidence history
///   config_echo.ini        effective configuration
///   timings.json           wall-clock seconds (only file that varies per run)
inline void emitReports(const ExperimentResult& result, const std::string& outDir) {
    namespace fs = std::filesystem;
    const fs::path dir(outDir);
    fs::create_directories(dir / "utilities");

    std::string csv = "round,client,phiBaseline,phiDpvs\n";
    for (const RoundArtifacts& art : result.rounds) {
        for (std::size_t i = 0; i < art.phiBaseline.size(); ++i) {
            csv += std::to_string(art.round);
            csv += ',';
            csv += std::to_string(i);
            csv += ',';
            csv += ExperimentConfig::formatNumber(art.phiBaseline[i]);
            csv += ',';
            csv += ExperimentConfig::formatNumber(art.phiDpvs[i]);
            csv += '\n';
        }
    }
    detail::writeTextFile(dir / "contributions.csv", csv);

    for (const RoundArtifacts& art : result.rounds) {
        nlohmann::ordered_json j;
        j["round"] = art.round;
        j["baseline"] = utilityTableToJson(art.baseline);
        j["dpvs"] = utilityTableToJson(art.dpvs);
        detail::writeTextFile(dir / "utilities" / ("round_" + std::to_string(art.round) + ".json"),
                              j.dump(2) + "\n");
    }

    nlohmann::ordered_json m = result.metrics.toJson();
    m["rounds"] = static_cast<int>(result.rounds.size());
    m["evaluated_samples_baseline"] = result.baselineSamples;
    m["evaluated_samples_dpvs"] = result.dpvsSamples;
    m["phi_baseline"] = result.baselineContrib.perClient;
    m["phi_dpvs"] = result.dpvsContrib.perClient;
    m["phi_baseline_normalized"] = result.baselineNormalized;
    m["phi_dpvs_normalized"] = result.dpvsNormalized;
    detail::writeTextFile(dir / "metrics.json", m.dump(2) + "\n");

    std::string metricsCsv = std::string(MetricReport::csvHeader()) + "\n" +
                             ExperimentConfig::formatNumber(result.metrics.timeSavingPercent) + "," +
                             ExperimentConfig::formatNumber(result.metrics.cosineDistance) + "," +
                             ExperimentConfig::formatNumber(result.metrics.euclideanDistance) + "," +
                             ExperimentConfig::formatNumber(result.metrics.maximumDifference) + "\n";
    detail::writeTextFile(dir / "metrics.csv", metricsCsv);

    detail::writeTextFile(dir / "ledger.json", result.ledger.toJson().dump(2) + "\n");
    detail::writeTextFile(dir / "config_echo.ini", result.config.echo());

    nlohmann::ordered_json timings;
    timings["baseline_seconds"] = result.baselineSeconds;
    timings["dpvs_seconds"] = result.dpvsSeconds;
    detail::writeTextFile(dir / "timings.json", timings.dump(2) + "\n");
}

/// One centralized-training epoch snapshot for the easy-set growth study.
struct EasyScaleRow {
    int epoch = 0;
    double accuracy = 0.0;    // validation accuracy percent after this epoch
    double easyFraction = -1.0;  // -1 until windowCorrect epochs are recorded
};

struct EasyScaleResult {
    std::vector<EasyScaleRow> rows;
    double finalEasyFraction = -1.0;
};

/// Single-machine analog of the federated loop: one model trained on the
/// whole training pool, evaluated on the carved validation set each epoch.
/// Shows how the easy fraction grows as the model converges.
inline EasyScaleResult runEasyScale(const ExperimentConfig& cfg) {
    cfg.validate();
    const LabeledDataset source = detail::buildSourceDataset(cfg);
    auto [validation, trainPool] =
        splitValidation(source, cfg.data.validationFraction, deriveSeed(cfg.masterSeed, "valsplit"));

    const ModelLayout layout{source.numFeatures, cfg.hiddenDim, source.numClasses};
    ModelParams model = initModel(layout, deriveSeed(cfg.masterSeed, "init"));

    ValidationLedger::Params p = cfg.ledger;
    // Every epoch appends a full record; push the dynamic phase past the end.
    p.startDynamicEpoch = std::max({cfg.rounds + 1, p.windowCorrect, p.windowConfidence, 1});
    ValidationLedger ledger(static_cast<int>(validation.size()), p);

    EasyScaleResult result;
    for (int t = 0; t < cfg.rounds; ++t) {
        TrainOptions opt;
        opt.epochs = cfg.train.localEpochs;
        opt.learningRate = cfg.train.learningRate;
        opt.batchSize = cfg.train.batchSize;
        opt.seed = deriveSeed(cfg.masterSeed, "client", 0, static_cast<std::uint64_t>(t));
        const GradientUpdate update = localTrain(model, trainPool, opt, 0, t);
        for (std::size_t k = 0; k < model.values.size(); ++k) model.values[k] += update.delta[k];

        const EvalReport report = evaluateAll(model, validation);
        ledger.appendFullRecord(report.records);

        EasyScaleRow row;
        row.epoch = t;
        row.accuracy = report.accuracy;
        if (ledger.rounds() >= p.windowCorrect) {
            const auto [easy, hard] = ledger.splitEasyHard();
            row.easyFraction =
                static_cast<double>(easy.size()) / static_cast<double>(validation.size());
        }
        result.rows.push_back(row);
    }
    if (!result.rows.empty()) result.finalEasyFraction = result.rows.back().easyFraction;
    return result;
}

inline void writeEasyScaleCsv(const EasyScaleResult& result, const std::string& path) {
    std::string csv = "epoch,accuracy,easy_fraction\n";
    for (const EasyScaleRow& row : result.rows) {
        csv += std::to_string(row.epoch);
        csv += ',';
        csv += ExperimentConfig::formatNumber(row.accuracy);
        csv += ',';
        csv += ExperimentConfig::formatNumber(row.easyFraction);
        csv += '\n';
    }
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    detail::writeTextFile(p, csv);
}

}  // namespace dpvs
