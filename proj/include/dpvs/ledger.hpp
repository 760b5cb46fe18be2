#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dpvs/model.hpp"

namespace dpvs {

/// Per-sample history of correctness bits and confidence scores across
/// validation rounds. Warm-up rounds append complete records verbatim;
/// dynamic rounds append partial records, completing pruned samples with
/// judge := 1 and confidence := previous * beta.
class ValidationLedger {
public:
    struct Params {
        int startDynamicEpoch = 5;
        double beta = 0.95;        // confidence decay for pruned samples
        int windowCorrect = 5;     // consecutive-correct window for the easy set
        int windowConfidence = 5;  // averaging window for confidence weights

        void validate() const {
            if (startDynamicEpoch < 0)
                throw std::invalid_argument("ledger: startDynamicEpoch must be >= 0");
            if (!(beta > 0.0 && beta <= 1.0))
                throw std::invalid_argument("ledger: beta must be in (0,1]");
            if (windowCorrect < 1 || windowConfidence < 1)
                throw std::invalid_argument("ledger: windows must be >= 1");
        }
    };

    ValidationLedger(int numSamples, Params params) : numSamples_(numSamples), params_(params) {
        if (numSamples < 1) throw std::invalid_argument("ledger: numSamples must be >= 1");
        params_.validate();
    }

    int numSamples() const { return numSamples_; }
    int rounds() const { return static_cast<int>(judge_.size()); }
    const Params& params() const { return params_; }

    bool judgeAt(int round, int sample) const {
        return judge_[checkRound(round)][checkSample(sample)] != 0;
    }
    double confidenceAt(int round, int sample) const {
        return conf_[checkRound(round)][checkSample(sample)];
    }

    /// Warm-up append: records must cover every sample index exactly once.
    void appendFullRecord(const std::vector<EvalRecord>& records) {
        if (rounds() >= params_.startDynamicEpoch)
            throw std::invalid_argument("ledger: full-record append past startDynamicEpoch");
        std::vector<std::uint8_t> judgeRow(static_cast<std::size_t>(numSamples_), 2);
        std::vector<double> confRow(static_cast<std::size_t>(numSamples_), 0.0);
        for (const EvalRecord& r : records) {
            const std::size_t i = checkSample(r.sampleIndex);
            if (judgeRow[i] != 2)
                throw std::invalid_argument("ledger: duplicate record for sample " +
                                            std::to_string(r.sampleIndex));
            judgeRow[i] = r.correct ? 1 : 0;
            confRow[i] = checkConfidence(r.confidence);
        }
        for (std::size_t i = 0; i < judgeRow.size(); ++i)
            if (judgeRow[i] == 2)
                throw std::invalid_argument("ledger: full record missing sample " + std::to_string(i));
        judge_.push_back(std::move(judgeRow));
        conf_.push_back(std::move(confRow));
    }

    /// Dynamic-phase append: evaluated samples are copied, pruned samples are
    /// completed as correct with decayed confidence.
    void appendPrunedRecord(const std::vector<EvalRecord>& records) {
        if (rounds() < params_.startDynamicEpoch)
            throw std::invalid_argument("ledger: pruned-record append before startDynamicEpoch");
        std::vector<std::uint8_t> covered(static_cast<std::size_t>(numSamples_), 0);
        std::vector<std::uint8_t> judgeRow(static_cast<std::size_t>(numSamples_), 1);
        std::vector<double> confRow;
        if (rounds() > 0) {
            confRow = conf_.back();
            for (double& c : confRow) c *= params_.beta;
        } else {
            // No history to decay from; only a fully covering record works.
            confRow.assign(static_cast<std::size_t>(numSamples_), 0.0);
        }
        for (const EvalRecord& r : records) {
            const std::size_t i = checkSample(r.sampleIndex);
            if (covered[i])
                throw std::invalid_argument("ledger: duplicate record for sample " +
                                            std::to_string(r.sampleIndex));
            covered[i] = 1;
            judgeRow[i] = r.correct ? 1 : 0;
            confRow[i] = checkConfidence(r.confidence);
        }
        if (rounds() == 0)
            for (std::size_t i = 0; i < covered.size(); ++i)
                if (!covered[i])
                    throw std::invalid_argument("ledger: no previous round to complete sample " +
                                                std::to_string(i));
        judge_.push_back(std::move(judgeRow));
        conf_.push_back(std::move(confRow));
    }

    /// Easy samples are those whose last windowCorrect judge bits are all 1.
    std::pair<std::vector<int>, std::vector<int>> splitEasyHard() const {
        const int w = params_.windowCorrect;
        if (rounds() < w)
            throw std::invalid_argument("ledger: " + std::to_string(rounds()) +
                                        " rounds recorded, need " + std::to_string(w) +
                                        " for the easy/hard split");
        std::vector<int> easy, hard;
        for (int s = 0; s < numSamples_; ++s) {
            bool allCorrect = true;
            for (int r = rounds() - w; r < rounds(); ++r)
                if (judge_[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)] == 0) {
                    allCorrect = false;
                    break;
                }
            (allCorrect ? easy : hard).push_back(s);
        }
        return {std::move(easy), std::move(hard)};
    }

    /// Mean of the last windowConfidence confidence entries for one sample.
    double averageRecentConfidence(int sampleIndex) const {
        const int m = params_.windowConfidence;
        if (rounds() < m)
            throw std::invalid_argument("ledger: " + std::to_string(rounds()) +
                                        " rounds recorded, need " + std::to_string(m) +
                                        " for the confidence average");
        const std::size_t s = checkSample(sampleIndex);
        double sum = 0.0;
        for (int r = rounds() - m; r < rounds(); ++r) sum += conf_[static_cast<std::size_t>(r)][s];
        return sum / static_cast<double>(m);
    }

    nlohmann::ordered_json toJson() const {
        nlohmann::ordered_json j;
        j["num_samples"] = numSamples_;
        j["start_dynamic_epoch"] = params_.startDynamicEpoch;
        j["beta"] = params_.beta;
        j["window_correct"] = params_.windowCorrect;
        j["window_confidence"] = params_.windowConfidence;
        j["judge_matrix"] = nlohmann::ordered_json::array();
        for (const auto& row : judge_) {
            nlohmann::ordered_json r = nlohmann::ordered_json::array();
            for (std::uint8_t bit : row) r.push_back(static_cast<int>(bit));
            j["judge_matrix"].push_back(std::move(r));
        }
        j["confidence_matrix"] = conf_;
        return j;
    }

    static ValidationLedger fromJson(const nlohmann::json& j) {
        Params p;
        p.startDynamicEpoch = j.at("start_dynamic_epoch").get<int>();
        p.beta = j.at("beta").get<double>();
        p.windowCorrect = j.at("window_correct").get<int>();
        p.windowConfidence = j.at("window_confidence").get<int>();
        ValidationLedger ledger(j.at("num_samples").get<int>(), p);
        const auto& jm = j.at("judge_matrix");
        const auto& cm = j.at("confidence_matrix");
        if (jm.size() != cm.size())
            throw std::invalid_argument("ledger: judge/confidence matrices differ in round count");
        for (std::size_t r = 0; r < jm.size(); ++r) {
            if (static_cast<int>(jm[r].size()) != ledger.numSamples_ ||
                static_cast<int>(cm[r].size()) != ledger.numSamples_)
                throw std::invalid_argument("ledger: matrix row " + std::to_string(r) +
                                            " has wrong sample count");
            std::vector<std::uint8_t> judgeRow;
            std::vector<double> confRow;
            judgeRow.reserve(jm[r].size());
            confRow.reserve(cm[r].size());
            for (const auto& bit : jm[r]) {
                const int v = bit.get<int>();
                if (v != 0 && v != 1) throw std::invalid_argument("ledger: judge entries must be bits");
                judgeRow.push_back(static_cast<std::uint8_t>(v));
            }
            for (const auto& c : cm[r]) confRow.push_back(checkConfidence(c.get<double>()));
            ledger.judge_.push_back(std::move(judgeRow));
            ledger.conf_.push_back(std::move(confRow));
        }
        return ledger;
    }

private:
    std::size_t checkSample(int s) const {
        if (s < 0 || s >= numSamples_)
            throw std::invalid_argument("ledger: sample index out of range: " + std::to_string(s));
        return static_cast<std::size_t>(s);
    }
    std::size_t checkRound(int r) const {
        if (r < 0 || r >= rounds())
            throw std::invalid_argument("ledger: round index out of range: " + std::to_string(r));
        return static_cast<std::size_t>(r);
    }
    static double checkConfidence(double c) {
        if (!(c >= 0.0 && c <= 1.0))
            throw std::invalid_argument("ledger: confidence out of [0,1]: " + std::to_string(c));
        return c;
    }

    int numSamples_;
    Params params_;
    std::vector<std::vector<std::uint8_t>> judge_;
    std::vector<std::vector<double>> conf_;
};

}  // namespace dpvs
