#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dpvs/dataset.hpp"
#include "dpvs/ledger.hpp"
#include "dpvs/pruner.hpp"

namespace dpvs {

/// Flat `key = value` file with `[section]` headers and `#` comment lines.
class KeyValueFile {
public:
    static KeyValueFile parseString(std::string_view text, std::string name = "<config>") {
        KeyValueFile kv;
        kv.name_ = std::move(name);
        std::string section;
        int lineNo = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const std::size_t eol = text.find('\n', pos);
            std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                                   : eol - pos);
            pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
            ++lineNo;
            line = trim(line);
            if (line.empty() || line.front() == '#') continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw std::runtime_error(kv.where(lineNo) + "unterminated section header");
                section = std::string(trim(line.substr(1, line.size() - 2)));
                continue;
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string_view::npos)
                throw std::runtime_error(kv.where(lineNo) + "expected 'key = value'");
            const std::string key = section + "." + std::string(trim(line.substr(0, eq)));
            if (kv.values_.count(key))
                throw std::runtime_error(kv.where(lineNo) + "duplicate key '" + key + "'");
            kv.values_[key] = {std::string(trim(line.substr(eq + 1))), lineNo};
        }
        return kv;
    }

    static KeyValueFile parseFile(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open " + path);
        std::ostringstream buffer;
        buffer << in.rdbuf();
        return parseString(buffer.str(), path);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string getString(const std::string& key) const { return entry(key).text; }
    std::string getString(const std::string& key, const std::string& fallback) const {
        return has(key) ? getString(key) : fallback;
    }

    long long getInt(const std::string& key) const {
        const Entry& e = entry(key);
        long long v = 0;
        if (!parseWith(e.text, v)) fail(e, key, "an integer");
        return v;
    }
    long long getInt(const std::string& key, long long fallback) const {
        return has(key) ? getInt(key) : fallback;
    }

    std::uint64_t getUInt64(const std::string& key) const {
        const Entry& e = entry(key);
        std::uint64_t v = 0;
        if (!parseWith(e.text, v)) fail(e, key, "an unsigned integer");
        return v;
    }
    std::uint64_t getUInt64(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? getUInt64(key) : fallback;
    }

    double getDouble(const std::string& key) const {
        const Entry& e = entry(key);
        double v = 0.0;
        if (!parseWith(e.text, v)) fail(e, key, "a number");
        return v;
    }
    double getDouble(const std::string& key, double fallback) const {
        return has(key) ? getDouble(key) : fallback;
    }

    bool getBool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const Entry& e = entry(key);
        if (e.text == "true" || e.text == "1") return true;
        if (e.text == "false" || e.text == "0") return false;
        fail(e, key, "true or false");
        return false;
    }

    std::vector<double> getDoubleList(const std::string& key) const {
        const Entry& e = entry(key);
        std::vector<double> out;
        for (std::string_view cell : splitOn(e.text, ',')) {
            double v = 0.0;
            if (!parseWith(cell, v)) fail(e, key, "a comma-separated number list");
            out.push_back(v);
        }
        return out;
    }

    /// Rows separated by ';', entries by ','.
    std::vector<std::vector<double>> getDoubleRows(const std::string& key) const {
        const Entry& e = entry(key);
        std::vector<std::vector<double>> rows;
        for (std::string_view rowText : splitOn(e.text, ';')) {
            std::vector<double> row;
            for (std::string_view cell : splitOn(rowText, ',')) {
                double v = 0.0;
                if (!parseWith(cell, v)) fail(e, key, "rows of numbers ('1,0 ; 0,1')");
                row.push_back(v);
            }
            rows.push_back(std::move(row));
        }
        return rows;
    }

    /// Every key must be consumed by one of the getters above; anything else
    /// is reported as a likely typo.
    void requireAllConsumed() const {
        std::vector<std::string> unknown;
        for (const auto& [key, e] : values_)
            if (!consumed_.count(key)) unknown.push_back(key + " (line " + std::to_string(e.line) + ")");
        if (!unknown.empty()) {
            std::string msg = name_ + ": unknown keys:";
            for (const auto& k : unknown) msg += " " + k;
            throw std::runtime_error(msg);
        }
    }

private:
    struct Entry {
        std::string text;
        int line = 0;
    };

    static std::string_view trim(std::string_view s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
        return s;
    }

    static std::vector<std::string_view> splitOn(std::string_view text, char sep) {
        std::vector<std::string_view> parts;
        std::size_t start = 0;
        while (true) {
            const std::size_t at = text.find(sep, start);
            parts.push_back(trim(text.substr(start, at == std::string_view::npos ? std::string_view::npos
                                                                                 : at - start)));
            if (at == std::string_view::npos) break;
            start = at + 1;
        }
        return parts;
    }

    template <typename T>
    static bool parseWith(std::string_view text, T& out) {
        text = trim(text);
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
        return ec == std::errc() && ptr == text.data() + text.size() && !text.empty();
    }

    const Entry& entry(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end())
            throw std::runtime_error(name_ + ": missing required key '" + key + "'");
        consumed_.insert(key);
        return it->second;
    }

    [[noreturn]] void fail(const Entry& e, const std::string& key, const char* expected) const {
        throw std::runtime_error(where(e.line) + "key '" + key + "' expects " + expected + ", got '" +
                                 e.text + "'");
    }

    std::string where(int line) const { return name_ + ":" + std::to_string(line) + ": "; }

    std::string name_;
    std::map<std::string, Entry> values_;
    mutable std::set<std::string> consumed_;
};

enum class DataSource { Blobs, Csv };

struct DataConfig {
    DataSource source = DataSource::Blobs;
    std::string csvPath;
    SchemeKind scheme = SchemeKind::SDSS;
    int numClients = 5;
    int numSamples = 1000;
    int numClasses = 3;
    int inputDim = 8;
    double separation = 3.0;
    double validationFraction = 0.2;
    std::vector<double> sizeWeights;
    std::vector<std::vector<double>> classSkew;
    std::vector<double> noiseLevels;
};

struct TrainConfig {
    int localEpochs = 5;
    double learningRate = 0.1;
    int batchSize = 32;
};

struct ExperimentConfig {
    DataConfig data;
    int hiddenDim = 0;
    TrainConfig train;
    ValidationLedger::Params ledger;
    PruneConfig prune;  // prune.seed is derived from masterSeed at run time
    int rounds = 20;
    std::uint64_t masterSeed = 42;
    std::string outputDir = "out";

    static SchemeKind parseScheme(const std::string& text) {
        if (text == "sdss") return SchemeKind::SDSS;
        if (text == "ddss") return SchemeKind::DDSS;
        if (text == "sdds") return SchemeKind::SDDS;
        if (text == "nfss") return SchemeKind::NFSS;
        if (text == "nlss") return SchemeKind::NLSS;
        throw std::runtime_error("config: unknown scheme '" + text +
                                 "' (expected sdss|ddss|sdds|nfss|nlss)");
    }

    static PruneStrategy parseStrategy(const std::string& text) {
        if (text == "none") return PruneStrategy::NoneKeepEasyOut;
        if (text == "random") return PruneStrategy::Random;
        if (text == "weight_random") return PruneStrategy::WeightRandom;
        throw std::runtime_error("config: unknown strategy '" + text +
                                 "' (expected none|random|weight_random)");
    }

    static UpdateTiming parseTiming(const std::string& text) {
        if (text == "ee") return UpdateTiming::EE;
        if (text == "et") return UpdateTiming::ET;
        throw std::runtime_error("config: unknown timing '" + text + "' (expected ee|et)");
    }

    static ExperimentConfig fromKeyValues(const KeyValueFile& kv) {
        ExperimentConfig cfg;
        cfg.rounds = static_cast<int>(kv.getInt("experiment.rounds"));
        cfg.masterSeed = kv.getUInt64("experiment.master_seed", cfg.masterSeed);
        cfg.outputDir = kv.getString("experiment.output_dir", cfg.outputDir);

        const std::string source = kv.getString("data.source", "blobs");
        if (source == "blobs")
            cfg.data.source = DataSource::Blobs;
        else if (source == "csv")
            cfg.data.source = DataSource::Csv;
        else
            throw std::runtime_error("config: unknown data source '" + source + "'");
        cfg.data.csvPath = kv.getString("data.csv_path", "");
        cfg.data.scheme = parseScheme(kv.getString("data.scheme", "sdss"));
        cfg.data.numClients = static_cast<int>(kv.getInt("data.clients", cfg.data.numClients));
        cfg.data.numSamples = static_cast<int>(kv.getInt("data.samples", cfg.data.numSamples));
        cfg.data.numClasses = static_cast<int>(kv.getInt("data.classes", cfg.data.numClasses));
        cfg.data.inputDim = static_cast<int>(kv.getInt("data.features", cfg.data.inputDim));
        cfg.data.separation = kv.getDouble("data.separation", cfg.data.separation);
        cfg.data.validationFraction =
            kv.getDouble("data.validation_fraction", cfg.data.validationFraction);
        if (kv.has("data.size_weights")) cfg.data.sizeWeights = kv.getDoubleList("data.size_weights");
        if (kv.has("data.class_skew")) cfg.data.classSkew = kv.getDoubleRows("data.class_skew");
        if (kv.has("data.noise_levels")) cfg.data.noiseLevels = kv.getDoubleList("data.noise_levels");

        cfg.hiddenDim = static_cast<int>(kv.getInt("model.hidden", 0));

        cfg.train.localEpochs = static_cast<int>(kv.getInt("train.local_epochs", cfg.train.localEpochs));
        cfg.train.learningRate = kv.getDouble("train.lr", cfg.train.learningRate);
        cfg.train.batchSize = static_cast<int>(kv.getInt("train.batch_size", cfg.train.batchSize));

        cfg.ledger.beta = kv.getDouble("ledger.beta", cfg.ledger.beta);
        cfg.ledger.windowCorrect =
            static_cast<int>(kv.getInt("ledger.window_correct", cfg.ledger.windowCorrect));
        cfg.ledger.windowConfidence =
            static_cast<int>(kv.getInt("ledger.window_confidence", cfg.ledger.windowConfidence));

        cfg.prune.strategy = parseStrategy(kv.getString("prune.strategy", "random"));
        cfg.prune.timing = parseTiming(kv.getString("prune.timing", "ee"));
        if (kv.has("prune.ratios")) cfg.prune.ratios = kv.getDoubleList("prune.ratios");
        cfg.prune.startDynamicEpoch =
            static_cast<int>(kv.getInt("prune.start_dynamic_epoch", cfg.prune.startDynamicEpoch));
        cfg.prune.rawConfidenceWeights = kv.getBool("prune.raw_confidence_weights", false);
        cfg.ledger.startDynamicEpoch = cfg.prune.startDynamicEpoch;

        kv.requireAllConsumed();
        cfg.validate();
        return cfg;
    }

    static ExperimentConfig load(const std::string& path) {
        return fromKeyValues(KeyValueFile::parseFile(path));
    }

    void validate() const {
        if (rounds < 1) throw std::runtime_error("config: rounds must be >= 1");
        if (data.numClients < 2) throw std::runtime_error("config: clients must be >= 2");
        if (data.numClients > 16)
            throw std::runtime_error("config: exhaustive coalition enumeration capped at 16 clients");
        if (data.source == DataSource::Blobs) {
            if (data.numSamples < data.numClasses)
                throw std::runtime_error("config: samples must be >= classes");
            if (!(data.separation > 0.0)) throw std::runtime_error("config: separation must be > 0");
        } else if (data.csvPath.empty()) {
            throw std::runtime_error("config: data.csv_path required when data.source = csv");
        }
        if (!(data.validationFraction > 0.0 && data.validationFraction < 1.0))
            throw std::runtime_error("config: validation_fraction must be in (0,1)");
        if (data.scheme == SchemeKind::SDDS &&
            static_cast<int>(data.sizeWeights.size()) != data.numClients)
            throw std::runtime_error("config: sdds needs size_weights with one entry per client");
        if (data.scheme == SchemeKind::DDSS &&
            static_cast<int>(data.classSkew.size()) != data.numClients)
            throw std::runtime_error("config: ddss needs class_skew with one row per client");
        if ((data.scheme == SchemeKind::NFSS || data.scheme == SchemeKind::NLSS) &&
            static_cast<int>(data.noiseLevels.size()) != data.numClients)
            throw std::runtime_error("config: nfss/nlss need noise_levels with one entry per client");
        if (hiddenDim < 0) throw std::runtime_error("config: hidden must be >= 0");
        if (train.localEpochs < 0) throw std::runtime_error("config: local_epochs must be >= 0");
        if (!(train.learningRate > 0.0)) throw std::runtime_error("config: lr must be > 0");
        if (train.batchSize < 1) throw std::runtime_error("config: batch_size must be >= 1");
        ledger.validate();
        if (static_cast<int>(prune.ratios.size()) != data.numClients)
            throw std::runtime_error("config: prune.ratios needs one entry per client count 1..n");
        for (double r : prune.ratios)
            if (!(r >= 0.0 && r <= 1.0))
                throw std::runtime_error("config: prune ratios must be in [0,1]");
        if (prune.startDynamicEpoch < std::max({1, ledger.windowCorrect, ledger.windowConfidence}))
            throw std::runtime_error(
                "config: start_dynamic_epoch must cover the ledger windows (>= max(window_correct, "
                "window_confidence, 1))");
    }

    std::string echo() const {
        std::ostringstream out;
        out << "[experiment]\n";
        out << "rounds = " << rounds << "\n";
        out << "master_seed = " << masterSeed << "\n";
        out << "output_dir = " << outputDir << "\n";
        out << "\n[data]\n";
        out << "source = " << (data.source == DataSource::Blobs ? "blobs" : "csv") << "\n";
        if (data.source == DataSource::Csv) out << "csv_path = " << data.csvPath << "\n";
        out << "scheme = " << schemeName(data.scheme) << "\n";
        out << "clients = " << data.numClients << "\n";
        if (data.source == DataSource::Blobs) {
            out << "samples = " << data.numSamples << "\n";
            out << "classes = " << data.numClasses << "\n";
            out << "features = " << data.inputDim << "\n";
            out << "separation = " << formatNumber(data.separation) << "\n";
        }
        out << "validation_fraction = " << formatNumber(data.validationFraction) << "\n";
        if (!data.sizeWeights.empty()) out << "size_weights = " << joinNumbers(data.sizeWeights) << "\n";
        if (!data.classSkew.empty()) {
            out << "class_skew = ";
            for (std::size_t i = 0; i < data.classSkew.size(); ++i) {
                if (i) out << " ; ";
                out << joinNumbers(data.classSkew[i]);
            }
            out << "\n";
        }
        if (!data.noiseLevels.empty()) out << "noise_levels = " << joinNumbers(data.noiseLevels) << "\n";
        out << "\n[model]\n";
        out << "hidden = " << hiddenDim << "\n";
        out << "\n[train]\n";
        out << "local_epochs = " << train.localEpochs << "\n";
        out << "lr = " << formatNumber(train.learningRate) << "\n";
        out << "batch_size = " << train.batchSize << "\n";
        out << "\n[ledger]\n";
        out << "beta = " << formatNumber(ledger.beta) << "\n";
        out << "window_correct = " << ledger.windowCorrect << "\n";
        out << "window_confidence = " << ledger.windowConfidence << "\n";
        out << "\n[prune]\n";
        out << "strategy = " << strategyName(prune.strategy) << "\n";
        out << "timing = " << (prune.timing == UpdateTiming::EE ? "ee" : "et") << "\n";
        out << "ratios = " << joinNumbers(prune.ratios) << "\n";
        out << "start_dynamic_epoch = " << prune.startDynamicEpoch << "\n";
        out << "raw_confidence_weights = " << (prune.rawConfidenceWeights ? "true" : "false") << "\n";
        return out.str();
    }

    static const char* schemeName(SchemeKind kind) {
        switch (kind) {
            case SchemeKind::SDSS: return "sdss";
            case SchemeKind::DDSS: return "ddss";
            case SchemeKind::SDDS: return "sdds";
            case SchemeKind::NFSS: return "nfss";
            case SchemeKind::NLSS: return "nlss";
        }
        return "sdss";
    }

    static const char* strategyName(PruneStrategy s) {
        switch (s) {
            case PruneStrategy::NoneKeepEasyOut: return "none";
            case PruneStrategy::Random: return "random";
            case PruneStrategy::WeightRandom: return "weight_random";
        }
        return "random";
    }

    /// Shortest round-trip decimal form, so echoed configs are byte-stable.
    static std::string formatNumber(double v) {
        char buf[64];
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        if (ec != std::errc()) return "0";
        return std::string(buf, ptr);
    }

    static std::string joinNumbers(const std::vector<double>& values) {
        std::string out;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out += ", ";
            out += formatNumber(values[i]);
        }
        return out;
    }
};

}  // namespace dpvs
