#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dpvs/model.hpp"
#include "dpvs/pruner.hpp"

namespace dpvs {

/// Utilities of every coalition of one round, dense over the 2^n masks.
/// utility[0] is the base model's utility (the empty coalition).
struct UtilityTable {
    int numClients = 0;
    int round = 0;
    std::vector<double> utility;        // indexed by coalition mask
    std::vector<int> evaluatedSamples;  // nDynamic per mask, for time accounting

    void validate() const {
        const std::size_t expected = std::size_t{1} << numClients;
        if (numClients < 1 || utility.size() != expected)
            throw std::invalid_argument("UtilityTable: incomplete table");
        for (double u : utility)
            if (!std::isfinite(u)) throw std::invalid_argument("UtilityTable: non-finite utility");
    }
};

struct UtilityBuildResult {
    UtilityTable table;
    // Grand-coalition evaluation records, the round's ledger row source.
    std::vector<EvalRecord> grandRecords;
};

/// Reconstructs every coalition model from the round's gradients and scores
/// it on its plan's validation subset, with the pruned-share accuracy
/// correction applied. Coalitions are
/// independent, so masks may be scored on several threads.
inline UtilityBuildResult buildUtilityTable(const ModelParams& base,
                                            const std::vector<GradientUpdate>& updates,
                                            const std::vector<PrunePlan>& schedule,
                                            const LabeledDataset& validation, int threads = 1) {
    const int n = static_cast<int>(updates.size());
    if (n < 1 || n > 20) throw std::invalid_argument("buildUtilityTable: client count out of range");
    std::vector<const GradientUpdate*> byClient(static_cast<std::size_t>(n), nullptr);
    for (const GradientUpdate& u : updates) {
        if (u.clientId < 0 || u.clientId >= n || byClient[static_cast<std::size_t>(u.clientId)])
            throw std::invalid_argument("buildUtilityTable: need exactly one update per client");
        byClient[static_cast<std::size_t>(u.clientId)] = &u;
    }
    const std::size_t total = std::size_t{1} << n;
    if (schedule.size() != total)
        throw std::invalid_argument("buildUtilityTable: schedule is missing coalitions (" +
                                    std::to_string(schedule.size()) + " of " +
                                    std::to_string(total) + ")");
    if (validation.size() == 0) throw std::invalid_argument("buildUtilityTable: empty validation set");

    UtilityBuildResult result;
    result.table.numClients = n;
    result.table.round = updates.front().round;
    result.table.utility.assign(total, 0.0);
    result.table.evaluatedSamples.assign(total, 0);

    auto scoreMask = [&](std::size_t mask) {
        const PrunePlan& plan = schedule[mask];
        ModelParams coalitionModel = base;
        if (mask != 0) {
            std::vector<GradientUpdate> members;
            members.reserve(static_cast<std::size_t>(std::popcount(mask)));
            for (int i = 0; i < n; ++i)
                if (mask & (std::size_t{1} << i)) members.push_back(*byClient[static_cast<std::size_t>(i)]);
            coalitionModel = reconstructCoalitionModel(base, members);
        }
        double accDynamic = 0.0;
        EvalReport report;
        if (!plan.evaluateIndices.empty()) {
            report = evaluate(coalitionModel, validation, plan.evaluateIndices);
            accDynamic = report.accuracy;
        }
        result.table.utility[mask] = adjustAccuracy(plan, accDynamic);
        result.table.evaluatedSamples[mask] = plan.nDynamic;
        if (mask == total - 1) result.grandRecords = std::move(report.records);
    };

    if (threads <= 1 || total < 4) {
        for (std::size_t mask = 0; mask < total; ++mask) scoreMask(mask);
    } else {
        const int workers = std::min<int>(threads, static_cast<int>(total));
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t mask = static_cast<std::size_t>(w); mask < total;
                     mask += static_cast<std::size_t>(workers))
                    scoreMask(mask);
            });
        for (auto& t : pool) t.join();
    }
    return result;
}

/// Per-round Shapley values from the closed-form subset sum:
/// phi_i = (1/n) * sum_{S not containing i} [U(S + i) - U(S)] / C(n-1, |S|).
inline std::vector<double> shapleyFromTable(const UtilityTable& table) {
    table.validate();
    const int n = table.numClients;
    std::vector<double> binom(static_cast<std::size_t>(n), 1.0);  // C(n-1, s)
    for (int s = 1; s < n; ++s)
        binom[static_cast<std::size_t>(s)] =
            binom[static_cast<std::size_t>(s - 1)] * static_cast<double>(n - s) / static_cast<double>(s);

    const std::size_t total = std::size_t{1} << n;
    std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        const std::size_t bit = std::size_t{1} << i;
        double sum = 0.0;
        for (std::size_t mask = 0; mask < total; ++mask) {
            if (mask & bit) continue;
            const double marginal = table.utility[mask | bit] - table.utility[mask];
            sum += marginal / binom[static_cast<std::size_t>(std::popcount(mask))];
        }
        phi[static_cast<std::size_t>(i)] = sum / static_cast<double>(n);
    }
    return phi;
}

/// Brute-force cross-check: the mean marginal contribution over all n!
/// join orders. Identical to shapleyFromTable up to floating rounding.
inline std::vector<double> shapleyPermutationOracle(const UtilityTable& table) {
    table.validate();
    const int n = table.numClients;
    if (n > 10) throw std::invalid_argument("shapleyPermutationOracle: n > 10 is intractable");

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
    double permutations = 0.0;
    do {
        std::size_t mask = 0;
        for (int member : order) {
            const std::size_t next = mask | (std::size_t{1} << member);
            sums[static_cast<std::size_t>(member)] += table.utility[next] - table.utility[mask];
            mask = next;
        }
        permutations += 1.0;
    } while (std::next_permutation(order.begin(), order.end()));

    for (double& s : sums) s /= permutations;
    return sums;
}

/// Per-client Shapley values accumulated across rounds.
struct ContributionVector {
    std::vector<double> perClient;
    int rounds = 0;
};

inline ContributionVector accumulate(const ContributionVector& contrib,
                                     const std::vector<double>& roundPhi) {
    if (contrib.perClient.size() != roundPhi.size())
        throw std::invalid_argument("accumulate: length mismatch");
    ContributionVector out = contrib;
    for (std::size_t i = 0; i < roundPhi.size(); ++i) out.perClient[i] += roundPhi[i];
    out.rounds += 1;
    return out;
}

/// Rescales to percentages summing to 100. Negative entries are allowed.
inline std::vector<double> normalizeContributions(const ContributionVector& contrib) {
    const double sum = std::accumulate(contrib.perClient.begin(), contrib.perClient.end(), 0.0);
    if (sum == 0.0) throw std::invalid_argument("normalizeContributions: contributions sum to zero");
    std::vector<double> out(contrib.perClient.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = contrib.perClient[i] * 100.0 / sum;
    return out;
}

inline nlohmann::ordered_json utilityTableToJson(const UtilityTable& table) {
    table.validate();
    nlohmann::ordered_json j;
    j["num_clients"] = table.numClients;
    j["round"] = table.round;
    nlohmann::ordered_json util = nlohmann::ordered_json::object();
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    for (std::size_t mask = 0; mask < table.utility.size(); ++mask) {
        util[std::to_string(mask)] = table.utility[mask];
        if (!table.evaluatedSamples.empty())
            counts[std::to_string(mask)] = table.evaluatedSamples[mask];
    }
    j["utility"] = std::move(util);
    if (!table.evaluatedSamples.empty()) j["evaluated_samples"] = std::move(counts);
    return j;
}

inline UtilityTable utilityTableFromJson(const nlohmann::json& j) {
    UtilityTable table;
    table.numClients = j.at("num_clients").get<int>();
    table.round = j.value("round", 0);
    const std::size_t total = std::size_t{1} << table.numClients;
    table.utility.assign(total, 0.0);
    const auto& util = j.at("utility");
    if (util.size() != total)
        throw std::invalid_argument("utilityTableFromJson: expected " + std::to_string(total) +
                                    " coalition entries, got " + std::to_string(util.size()));
    for (std::size_t mask = 0; mask < total; ++mask)
        table.utility[mask] = util.at(std::to_string(mask)).get<double>();
    if (j.contains("evaluated_samples")) {
        table.evaluatedSamples.assign(total, 0);
        for (std::size_t mask = 0; mask < total; ++mask)
            table.evaluatedSamples[mask] = j["evaluated_samples"].at(std::to_string(mask)).get<int>();
    }
    table.validate();
    return table;
}

}  // namespace dpvs
