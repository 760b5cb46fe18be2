#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace dpvs {

namespace detail {
inline void requireSameLength(std::span<const double> a, std::span<const double> b,
                              const char* what) {
    if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": length mismatch");
    if (a.empty()) throw std::invalid_argument(std::string(what) + ": empty vectors");
}
}  // namespace detail

inline double cosineDistance(std::span<const double> reference, std::span<const double> candidate) {
    detail::requireSameLength(reference, candidate, "cosineDistance");
    if (std::equal(reference.begin(), reference.end(), candidate.begin()))
        return 0.0;  // identical vectors must report zero despite sqrt rounding
    double dot = 0.0, normA = 0.0, normB = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        dot += reference[i] * candidate[i];
        normA += reference[i] * reference[i];
        normB += candidate[i] * candidate[i];
    }
    if (normA == 0.0 || normB == 0.0)
        throw std::invalid_argument("cosineDistance: zero vector");
    const double similarity = std::clamp(dot / (std::sqrt(normA) * std::sqrt(normB)), -1.0, 1.0);
    return 1.0 - similarity;
}

inline double euclideanDistance(std::span<const double> reference,
                                std::span<const double> candidate) {
    detail::requireSameLength(reference, candidate, "euclideanDistance");
    double sum = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double d = reference[i] - candidate[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

inline double maximumDifference(std::span<const double> reference,
                                std::span<const double> candidate) {
    detail::requireSameLength(reference, candidate, "maximumDifference");
    double worst = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i)
        worst = std::max(worst, std::abs(reference[i] - candidate[i]));
    return worst;
}

/// Percentage of validation work saved, in evaluated-sample counts.
inline double timeSaving(long long baselineEvaluatedSamples, long long prunedEvaluatedSamples) {
    if (baselineEvaluatedSamples <= 0)
        throw std::invalid_argument("timeSaving: baseline count must be positive");
    return 100.0 *
           static_cast<double>(baselineEvaluatedSamples - prunedEvaluatedSamples) /
           static_cast<double>(baselineEvaluatedSamples);
}

struct MetricReport {
    double timeSavingPercent = 0.0;
    double cosineDistance = 0.0;
    double euclideanDistance = 0.0;
    double maximumDifference = 0.0;

    nlohmann::ordered_json toJson() const {
        nlohmann::ordered_json j;
        j["time_saving_percent"] = timeSavingPercent;
        j["cosine_distance"] = cosineDistance;
        j["euclidean_distance"] = euclideanDistance;
        j["maximum_difference"] = maximumDifference;
        return j;
    }

    static const char* csvHeader() {
        return "time_saving_percent,cosine_distance,euclidean_distance,maximum_difference";
    }
};

/// Distances between two contribution vectors already normalized to
/// percentage scale, plus the sample-count time saving.
inline MetricReport compareContributions(std::span<const double> reference,
                                         std::span<const double> candidate,
                                         long long baselineEvaluatedSamples,
                                         long long prunedEvaluatedSamples) {
    MetricReport report;
    report.cosineDistance = cosineDistance(reference, candidate);
    report.euclideanDistance = euclideanDistance(reference, candidate);
    report.maximumDifference = maximumDifference(reference, candidate);
    report.timeSavingPercent = timeSaving(baselineEvaluatedSamples, prunedEvaluatedSamples);
    return report;
}

}  // namespace dpvs
