#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpvs/ledger.hpp"
#include "dpvs/rng.hpp"

namespace dpvs {

enum class PruneStrategy {
    NoneKeepEasyOut,  // evaluate the hard set only
    Random,           // uniform draw from the easy set
    WeightRandom,     // low-confidence easy samples drawn more often
};

enum class UpdateTiming {
    EE,  // fresh plan per coalition, ratio keyed by coalition size
    ET,  // one plan per round, shared by every coalition
};

struct PruneConfig {
    PruneStrategy strategy = PruneStrategy::Random;
    UpdateTiming timing = UpdateTiming::EE;
    std::vector<double> ratios;  // extraction ratio per coalition size 1..n
    int startDynamicEpoch = 5;
    std::uint64_t seed = 0;
    // Weight easy samples by average confidence itself instead of the
    // default (1 - average confidence).
    bool rawConfidenceWeights = false;
};

/// Resolved evaluation set for one coalition, plus the counts the accuracy
/// correction needs.
struct PrunePlan {
    std::vector<int> evaluateIndices;  // sorted
    std::vector<int> prunedIndices;    // sorted complement
    int nSum = 0;
    int nDynamic = 0;
    int nPrune = 0;

    bool operator==(const PrunePlan&) const = default;
};

using CoalitionMask = std::uint32_t;

namespace detail {

inline PrunePlan fullPlan(int numSamples) {
    PrunePlan plan;
    plan.evaluateIndices.resize(static_cast<std::size_t>(numSamples));
    for (int i = 0; i < numSamples; ++i) plan.evaluateIndices[static_cast<std::size_t>(i)] = i;
    plan.nSum = plan.nDynamic = numSamples;
    plan.nPrune = 0;
    return plan;
}

// ceil(ratio * count) with a guard against FP drift on exact multiples, and
// at least one sample whenever the ratio is nonzero and the set non-empty.
inline std::size_t extractionCount(double ratio, std::size_t count) {
    if (ratio <= 0.0 || count == 0) return 0;
    const double raw = std::ceil(ratio * static_cast<double>(count) - 1e-9);
    const auto take = static_cast<std::size_t>(std::max(1.0, raw));
    return std::min(take, count);
}

}  // namespace detail

/// Builds one coalition's validation plan. Warm-up rounds evaluate everything; after
/// startDynamicEpoch the hard set is always evaluated and the easy set is
/// sampled at the ratio for this coalition size (the empty coalition uses the
/// size-1 ratio). Deterministic per (seed, roundIndex, coalition mask).
inline PrunePlan buildPlan(const ValidationLedger& ledger, const PruneConfig& config,
                           CoalitionMask coalition, int roundIndex) {
    if (roundIndex < config.startDynamicEpoch) return detail::fullPlan(ledger.numSamples());

    const int coalitionSize = std::popcount(coalition);
    const std::size_t ratioIndex = static_cast<std::size_t>(std::max(0, coalitionSize - 1));
    if (config.ratios.empty() || ratioIndex >= config.ratios.size())
        throw std::invalid_argument("buildPlan: no extraction ratio for coalition size " +
                                    std::to_string(coalitionSize));
    const double ratio = config.ratios[ratioIndex];
    if (!(ratio >= 0.0 && ratio <= 1.0))
        throw std::invalid_argument("buildPlan: extraction ratio out of [0,1]");

    auto [easy, hard] = ledger.splitEasyHard();

    std::vector<int> selected;
    const std::size_t take = detail::extractionCount(ratio, easy.size());
    if (take == easy.size()) {
        // Full extraction evaluates everything no matter the strategy, so a
        // ratio of 1.0 reproduces the unpruned pipeline bit for bit.
        selected = easy;
    } else if (config.strategy != PruneStrategy::NoneKeepEasyOut && take > 0) {
        auto rng = makeEngine(deriveSeed(config.seed, "prune-plan",
                                         static_cast<std::uint64_t>(roundIndex),
                                         static_cast<std::uint64_t>(coalition)));
        if (config.strategy == PruneStrategy::Random) {
            selected = sampleWithoutReplacement(rng, easy, take);
        } else {
            // Weighted draw without replacement via exponential sort keys:
            // key_i = -ln(u_i) / w_i, keep the `take` smallest.
            std::vector<std::pair<double, int>> keyed;
            keyed.reserve(easy.size());
            for (int idx : easy) {
                constexpr double kEpsilon = 1e-6;
                const double avg = ledger.averageRecentConfidence(idx);
                const double weight =
                    (config.rawConfidenceWeights ? avg : 1.0 - avg) + kEpsilon;
                const double key = -std::log(1.0 - nextUnit(rng)) / weight;
                keyed.emplace_back(key, idx);
            }
            std::sort(keyed.begin(), keyed.end());
            selected.reserve(take);
            for (std::size_t i = 0; i < take; ++i) selected.push_back(keyed[i].second);
        }
    }

    PrunePlan plan;
    plan.evaluateIndices = std::move(hard);
    plan.evaluateIndices.insert(plan.evaluateIndices.end(), selected.begin(), selected.end());
    std::sort(plan.evaluateIndices.begin(), plan.evaluateIndices.end());

    plan.nSum = ledger.numSamples();
    plan.nDynamic = static_cast<int>(plan.evaluateIndices.size());
    plan.nPrune = plan.nSum - plan.nDynamic;
    plan.prunedIndices.reserve(static_cast<std::size_t>(plan.nPrune));
    std::size_t at = 0;
    for (int i = 0; i < plan.nSum; ++i) {
        if (at < plan.evaluateIndices.size() && plan.evaluateIndices[at] == i)
            ++at;
        else
            plan.prunedIndices.push_back(i);
    }
    return plan;
}

/// Plans for all 2^numClients coalition masks of one round. EE draws a fresh
/// plan per coalition; ET builds the grand-coalition plan once and shares it.
inline std::vector<PrunePlan> planSchedule(const ValidationLedger& ledger,
                                           const PruneConfig& config, int numClients,
                                           int roundIndex) {
    if (numClients < 1 || numClients > 20)
        throw std::invalid_argument("planSchedule: numClients out of supported range");
    const std::size_t total = std::size_t{1} << numClients;
    std::vector<PrunePlan> schedule;
    schedule.reserve(total);
    if (config.timing == UpdateTiming::ET) {
        const auto full = static_cast<CoalitionMask>(total - 1);
        schedule.assign(total, buildPlan(ledger, config, full, roundIndex));
    } else {
        for (std::size_t mask = 0; mask < total; ++mask)
            schedule.push_back(buildPlan(ledger, config, static_cast<CoalitionMask>(mask), roundIndex));
    }
    return schedule;
}

/// Accuracy correction for a pruned evaluation: pruned samples count as
/// correct, so the final figure is 100 * nPrune/nSum + accDynamic * nDynamic/nSum.
inline double adjustAccuracy(const PrunePlan& plan, double accDynamic) {
    if (plan.nSum <= 0) throw std::invalid_argument("adjustAccuracy: nSum must be positive");
    if (plan.nDynamic < 0 || plan.nPrune < 0 || plan.nDynamic + plan.nPrune != plan.nSum ||
        plan.nDynamic != static_cast<int>(plan.evaluateIndices.size()))
        throw std::invalid_argument("adjustAccuracy: plan counts inconsistent");
    if (!(accDynamic >= 0.0 && accDynamic <= 100.0))
        throw std::invalid_argument("adjustAccuracy: accDynamic out of [0,100]");
    if (plan.nPrune == 0) return accDynamic;
    const double total = static_cast<double>(plan.nSum);
    return 100.0 * (static_cast<double>(plan.nPrune) / total) +
           accDynamic * (static_cast<double>(plan.nDynamic) / total);
}

}  // namespace dpvs
