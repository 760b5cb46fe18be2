#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "dpvs/dataset.hpp"
#include "dpvs/model.hpp"
#include "dpvs/pruner.hpp"
#include "dpvs/rng.hpp"
#include "dpvs/shapley.hpp"

using namespace dpvs;

namespace {

UtilityTable makeTable(int n, std::vector<double> utilities, int round = 0) {
    UtilityTable table;
    table.numClients = n;
    table.round = round;
    table.utility = std::move(utilities);
    return table;
}

// Independent check against the textbook factorial weighting:
// phi_i = sum_{S not containing i} |S|! (n-1-|S|)! / n! * [U(S+i) - U(S)].
std::vector<double> factorialOracle(const UtilityTable& table) {
    const int n = table.numClients;
    std::vector<double> fact(static_cast<std::size_t>(n) + 1, 1.0);
    for (int k = 1; k <= n; ++k)
        fact[static_cast<std::size_t>(k)] = fact[static_cast<std::size_t>(k - 1)] * k;
    const std::size_t total = std::size_t{1} << n;
    std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        const std::size_t bit = std::size_t{1} << i;
        for (std::size_t mask = 0; mask < total; ++mask) {
            if (mask & bit) continue;
            const int s = std::popcount(mask);
            const double weight = fact[static_cast<std::size_t>(s)] *
                                  fact[static_cast<std::size_t>(n - 1 - s)] /
                                  fact[static_cast<std::size_t>(n)];
            phi[static_cast<std::size_t>(i)] +=
                weight * (table.utility[mask | bit] - table.utility[mask]);
        }
    }
    return phi;
}

void checkClose(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        REQUIRE_THAT(a[i], Catch::Matchers::WithinAbs(b[i], tol));
}

}  // namespace

TEST_CASE("additive games split value by addend") {
    const auto table = makeTable(2, {0.0, 3.0, 5.0, 8.0});
    const auto phi = shapleyFromTable(table);
    CHECK(phi == std::vector<double>{3.0, 5.0});
}

TEST_CASE("constant games award nothing") {
    const auto table = makeTable(3, std::vector<double>(8, 42.0));
    for (double v : shapleyFromTable(table)) CHECK(v == 0.0);
}

TEST_CASE("single client takes the whole marginal") {
    const auto phi = shapleyFromTable(makeTable(1, {60.0, 85.0}));
    REQUIRE(phi.size() == 1);
    CHECK(phi[0] == 25.0);
}

TEST_CASE("three-client worked example") {
    // Clients 1 and 2 are interchangeable, client 3 adds nothing anywhere.
    const auto table = makeTable(3, {0.0, 10.0, 10.0, 30.0, 0.0, 10.0, 10.0, 30.0});
    const auto phi = shapleyFromTable(table);
    REQUIRE(phi.size() == 3);
    CHECK(phi[0] == 15.0);
    CHECK(phi[1] == 15.0);
    CHECK(phi[2] == 0.0);
    checkClose(phi, shapleyPermutationOracle(table), 1e-9);
    checkClose(phi, factorialOracle(table), 1e-9);
}

TEST_CASE("interchangeable clients receive bit-identical shares") {
    // Swapping clients 0 and 1 leaves the utilities unchanged, and with three
    // clients every divisor is a power of two, so the shares match exactly.
    const auto table = makeTable(3, {1.1, 7.3, 7.3, 9.7, 4.2, 12.9, 12.9, 20.6});
    const auto phi = shapleyFromTable(table);
    CHECK(phi[0] == phi[1]);
}

TEST_CASE("clients that never change utility get exactly zero") {
    std::mt19937_64 gen(11);
    auto table = makeTable(3, std::vector<double>(8, 0.0));
    for (std::size_t mask = 0; mask < 8; ++mask) {
        if (mask & 0b010) continue;
        const double u = 100.0 * nextUnit(gen);
        table.utility[mask] = u;
        table.utility[mask | 0b010] = u;  // adding client 1 changes nothing
    }
    CHECK(shapleyFromTable(table)[1] == 0.0);
}

TEST_CASE("shares sum to the grand coalition gain") {
    std::mt19937_64 gen(23);
    for (int n = 1; n <= 6; ++n) {
        const std::size_t total = std::size_t{1} << n;
        std::vector<double> utilities(total);
        for (double& u : utilities) u = 100.0 * nextUnit(gen);
        const auto table = makeTable(n, utilities);
        const auto phi = shapleyFromTable(table);
        const double sum = std::accumulate(phi.begin(), phi.end(), 0.0);
        CHECK_THAT(sum, Catch::Matchers::WithinAbs(utilities[total - 1] - utilities[0], 1e-9));
        checkClose(phi, shapleyPermutationOracle(table), 1e-9);
        checkClose(phi, factorialOracle(table), 1e-9);
    }
}

TEST_CASE("table validation rejects malformed input") {
    CHECK_THROWS_AS(shapleyFromTable(makeTable(2, {0.0, 1.0, 2.0})), std::invalid_argument);
    CHECK_THROWS_AS(shapleyFromTable(makeTable(0, {1.0})), std::invalid_argument);
    CHECK_THROWS_AS(
        shapleyFromTable(makeTable(1, {0.0, std::numeric_limits<double>::infinity()})),
        std::invalid_argument);
    CHECK_THROWS_AS(shapleyPermutationOracle(makeTable(2, {0.0, 1.0})), std::invalid_argument);
}

TEST_CASE("utility tables from real models") {
    const auto validation = makeBlobs(30, 3, 4, 4.0, 99);
    const ModelLayout layout{validation.numFeatures, 0, validation.numClasses};
    const auto base = initModel(layout, 5);

    TrainOptions opt;
    opt.epochs = 2;
    opt.learningRate = 0.05;
    opt.batchSize = 8;
    const int n = 3;
    std::vector<GradientUpdate> updates;
    for (int i = 0; i < n; ++i) {
        auto shard = makeBlobs(20, 3, 4, 4.0, 200 + static_cast<std::uint64_t>(i));
        opt.seed = 300 + static_cast<std::uint64_t>(i);
        updates.push_back(localTrain(base, shard, opt, i, 6));
    }

    // Mixed schedule: odd masks score a 12-sample subset, even masks everything.
    std::vector<PrunePlan> schedule;
    for (std::size_t mask = 0; mask < (1u << n); ++mask) {
        if (mask % 2 == 1) {
            PrunePlan plan;
            for (int s = 0; s < 12; ++s) plan.evaluateIndices.push_back(s);
            for (int s = 12; s < 30; ++s) plan.prunedIndices.push_back(s);
            plan.nSum = 30;
            plan.nDynamic = 12;
            plan.nPrune = 18;
            schedule.push_back(std::move(plan));
        } else {
            schedule.push_back(detail::fullPlan(30));
        }
    }

    const auto built = buildUtilityTable(base, updates, schedule, validation);
    const auto& table = built.table;
    REQUIRE(table.utility.size() == 8);
    CHECK(table.round == 6);

    SECTION("each coalition is scored by rebuilding its members' model") {
        for (std::size_t mask = 0; mask < 8; ++mask) {
            ModelParams expectedModel = base;
            if (mask != 0) {
                std::vector<GradientUpdate> members;
                for (int i = 0; i < n; ++i)
                    if (mask & (1u << i)) members.push_back(updates[static_cast<std::size_t>(i)]);
                expectedModel = reconstructCoalitionModel(base, members);
            }
            const auto report = evaluate(expectedModel, validation, schedule[mask].evaluateIndices);
            CHECK(table.utility[mask] == adjustAccuracy(schedule[mask], report.accuracy));
            CHECK(table.evaluatedSamples[mask] == schedule[mask].nDynamic);
        }
    }

    SECTION("grand-coalition records feed the ledger") {
        const auto grandModel = reconstructCoalitionModel(base, updates);
        const auto report = evaluate(grandModel, validation, schedule[7].evaluateIndices);
        REQUIRE(built.grandRecords.size() == report.records.size());
        for (std::size_t k = 0; k < report.records.size(); ++k) {
            CHECK(built.grandRecords[k].sampleIndex == report.records[k].sampleIndex);
            CHECK(built.grandRecords[k].correct == report.records[k].correct);
            CHECK(built.grandRecords[k].confidence == report.records[k].confidence);
        }
    }

    SECTION("thread count never changes the numbers") {
        for (int threads : {2, 3, 8}) {
            const auto parallel = buildUtilityTable(base, updates, schedule, validation, threads);
            CHECK(parallel.table.utility == table.utility);
            CHECK(parallel.table.evaluatedSamples == table.evaluatedSamples);
            REQUIRE(parallel.grandRecords.size() == built.grandRecords.size());
            for (std::size_t k = 0; k < built.grandRecords.size(); ++k)
                CHECK(parallel.grandRecords[k].confidence == built.grandRecords[k].confidence);
        }
    }

    SECTION("zero updates leave every coalition at the base utility") {
        std::vector<GradientUpdate> still;
        for (int i = 0; i < n; ++i) {
            GradientUpdate u;
            u.clientId = i;
            u.round = 6;
            u.numSamples = 20;
            u.delta.assign(base.values.size(), 0.0);
            still.push_back(std::move(u));
        }
        const std::vector<PrunePlan> full(8, detail::fullPlan(30));
        const auto flat = buildUtilityTable(base, still, full, validation);
        for (std::size_t mask = 1; mask < 8; ++mask)
            CHECK(flat.table.utility[mask] == flat.table.utility[0]);
        for (double v : shapleyFromTable(flat.table)) CHECK(v == 0.0);
    }

    SECTION("input contract violations") {
        auto dup = updates;
        dup[1].clientId = 0;
        CHECK_THROWS_AS(buildUtilityTable(base, dup, schedule, validation),
                        std::invalid_argument);
        auto outOfRange = updates;
        outOfRange[2].clientId = 5;
        CHECK_THROWS_AS(buildUtilityTable(base, outOfRange, schedule, validation),
                        std::invalid_argument);
        CHECK_THROWS_AS(buildUtilityTable(base, {}, schedule, validation),
                        std::invalid_argument);
        auto shortSchedule = schedule;
        shortSchedule.pop_back();
        CHECK_THROWS_AS(buildUtilityTable(base, updates, shortSchedule, validation),
                        std::invalid_argument);
        CHECK_THROWS_AS(buildUtilityTable(base, updates, schedule, LabeledDataset{}),
                        std::invalid_argument);
    }

    SECTION("a plan that evaluates nothing scores the pruned share alone") {
        auto sparse = schedule;
        PrunePlan nothing;
        nothing.nSum = 30;
        nothing.nDynamic = 0;
        nothing.nPrune = 30;
        for (int s = 0; s < 30; ++s) nothing.prunedIndices.push_back(s);
        sparse[2] = nothing;
        const auto result = buildUtilityTable(base, updates, sparse, validation);
        CHECK(result.table.utility[2] == 100.0);
        CHECK(result.table.evaluatedSamples[2] == 0);
    }
}

TEST_CASE("accumulating per-round shares") {
    ContributionVector contrib;
    contrib.perClient.assign(2, 0.0);
    contrib = accumulate(contrib, {1.0, 2.0});
    contrib = accumulate(contrib, {3.0, 4.0});
    CHECK(contrib.perClient == std::vector<double>{4.0, 6.0});
    CHECK(contrib.rounds == 2);
    CHECK_THROWS_AS(accumulate(contrib, {1.0, 2.0, 3.0}), std::invalid_argument);

    SECTION("normalization scales to percentages") {
        CHECK(normalizeContributions(contrib) == std::vector<double>{40.0, 60.0});
    }
    SECTION("negative entries are preserved in proportion") {
        ContributionVector mixed;
        mixed.perClient = {-10.0, 30.0};
        CHECK(normalizeContributions(mixed) == std::vector<double>{-50.0, 150.0});
    }
    SECTION("an exactly zero total cannot be normalized") {
        ContributionVector zero;
        zero.perClient = {1.5, -1.5};
        CHECK_THROWS_AS(normalizeContributions(zero), std::invalid_argument);
    }
}

TEST_CASE("utility table JSON round trip") {
    auto table = makeTable(2, {50.0, 60.25, 61.5, 70.125}, 3);
    table.evaluatedSamples = {30, 30, 12, 12};

    const auto j = utilityTableToJson(table);
    CHECK(j.at("num_clients") == 2);
    CHECK(j.at("round") == 3);
    CHECK(j.at("utility").at("2") == 61.5);
    CHECK(j.at("evaluated_samples").at("3") == 12);

    const auto back = utilityTableFromJson(j);
    CHECK(back.numClients == table.numClients);
    CHECK(back.round == table.round);
    CHECK(back.utility == table.utility);
    CHECK(back.evaluatedSamples == table.evaluatedSamples);

    SECTION("missing coalitions are rejected") {
        auto broken = j;
        broken["utility"].erase("2");
        CHECK_THROWS(utilityTableFromJson(broken));
    }
    SECTION("sample counts are optional") {
        auto bare = makeTable(1, {10.0, 20.0});
        const auto round = utilityTableFromJson(utilityTableToJson(bare));
        CHECK(round.utility == bare.utility);
        CHECK(round.evaluatedSamples.empty());
    }
}
