#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dpvs/rng.hpp"

namespace dpvs {

struct LabeledDataset {
    std::vector<double> features;  // row-major, size() x numFeatures
    std::vector<int> labels;       // class ids in [0, numClasses)
    int numFeatures = 0;
    int numClasses = 0;

    std::size_t size() const { return labels.size(); }
    const double* row(std::size_t i) const {
        return features.data() + i * static_cast<std::size_t>(numFeatures);
    }
    double* row(std::size_t i) {
        return features.data() + i * static_cast<std::size_t>(numFeatures);
    }

    void validate() const {
        if (numFeatures < 1) throw std::invalid_argument("LabeledDataset: numFeatures must be >= 1");
        if (features.size() != labels.size() * static_cast<std::size_t>(numFeatures))
            throw std::invalid_argument("LabeledDataset: feature row count != label count");
        for (int y : labels)
            if (y < 0 || y >= numClasses)
                throw std::invalid_argument("LabeledDataset: label out of [0, numClasses)");
    }

    LabeledDataset select(std::span<const int> indices) const {
        LabeledDataset out;
        out.numFeatures = numFeatures;
        out.numClasses = numClasses;
        out.labels.reserve(indices.size());
        out.features.reserve(indices.size() * static_cast<std::size_t>(numFeatures));
        for (int i : indices) {
            const double* r = row(static_cast<std::size_t>(i));
            out.features.insert(out.features.end(), r, r + numFeatures);
            out.labels.push_back(labels[static_cast<std::size_t>(i)]);
        }
        return out;
    }
};

enum class SchemeKind { SDSS, DDSS, SDDS, NFSS, NLSS };

struct PartitionScheme {
    SchemeKind kind = SchemeKind::SDSS;
    int numClients = 2;
    std::vector<double> sizeWeights;             // SDDS only
    std::vector<std::vector<double>> classSkew;  // DDSS only, one weight row per client
    std::vector<double> noiseLevels;             // NFSS / NLSS only
};

/// Gaussian clusters, one per class, centered at +/- separation along the
/// coordinate axes (wrapping with sign flips when numClasses > inputDim).
/// Unit within-class variance, near-balanced class counts, rows shuffled.
inline LabeledDataset makeBlobs(int numSamples, int numClasses, int inputDim,
                                double separation, std::uint64_t seed) {
    if (numClasses < 1 || inputDim < 1) throw std::invalid_argument("makeBlobs: dims must be positive");
    if (numSamples < numClasses) throw std::invalid_argument("makeBlobs: numSamples < numClasses");
    if (!(separation > 0.0)) throw std::invalid_argument("makeBlobs: separation must be positive");

    auto rng = makeEngine(seed);
    LabeledDataset data;
    data.numFeatures = inputDim;
    data.numClasses = numClasses;
    data.labels.reserve(static_cast<std::size_t>(numSamples));
    data.features.reserve(static_cast<std::size_t>(numSamples) * inputDim);

    for (int c = 0; c < numClasses; ++c) {
        const int count = numSamples / numClasses + (c < numSamples % numClasses ? 1 : 0);
        const int axis = c % inputDim;
        const double sign = (c / inputDim) % 2 == 0 ? 1.0 : -1.0;
        const double radius = separation * sign * (1.0 + static_cast<double>(c / (2 * inputDim)));
        for (int s = 0; s < count; ++s) {
            for (int j = 0; j < inputDim; ++j) {
                const double center = j == axis ? radius : 0.0;
                data.features.push_back(center + nextNormal(rng));
            }
            data.labels.push_back(c);
        }
    }

    // Shuffle rows so downstream splits never see class-sorted order.
    std::vector<int> perm(static_cast<std::size_t>(numSamples));
    std::iota(perm.begin(), perm.end(), 0);
    shuffleInPlace(rng, perm);
    return data.select(perm);
}

namespace detail {

// Per-class sample pools, each shuffled with the supplied engine.
inline std::vector<std::vector<int>> shuffledClassPools(const LabeledDataset& data,
                                                        std::mt19937_64& rng) {
    std::vector<std::vector<int>> pools(static_cast<std::size_t>(data.numClasses));
    for (std::size_t i = 0; i < data.size(); ++i)
        pools[static_cast<std::size_t>(data.labels[i])].push_back(static_cast<int>(i));
    for (auto& pool : pools) shuffleInPlace(rng, pool);
    return pools;
}

// Largest-remainder apportionment of `total` into parts proportional to
// weights. Exact when the quotas are integral.
inline std::vector<int> apportion(int total, const std::vector<double>& weights) {
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("apportion: negative weight");
        sum += w;
    }
    if (sum <= 0.0) throw std::invalid_argument("apportion: weights sum to zero");
    std::vector<int> base(weights.size());
    std::vector<std::pair<double, std::size_t>> frac(weights.size());
    int assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double quota = static_cast<double>(total) * weights[i] / sum;
        base[i] = static_cast<int>(std::floor(quota + 1e-12));
        frac[i] = {quota - base[i], i};
        assigned += base[i];
    }
    std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int r = 0; r < total - assigned; ++r) base[frac[static_cast<std::size_t>(r)].second] += 1;
    return base;
}

}  // namespace detail

/// Carves a stratified validation split before any client partitioning.
/// Returns {validation, remainder}.
inline std::pair<LabeledDataset, LabeledDataset> splitValidation(const LabeledDataset& data,
                                                                 double fraction,
                                                                 std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("splitValidation: fraction must be in (0,1)");
    auto rng = makeEngine(seed);
    auto pools = detail::shuffledClassPools(data, rng);
    std::vector<int> valIdx, restIdx;
    for (const auto& pool : pools) {
        const auto take = static_cast<std::size_t>(
            std::llround(fraction * static_cast<double>(pool.size())));
        for (std::size_t i = 0; i < pool.size(); ++i)
            (i < take ? valIdx : restIdx).push_back(pool[i]);
    }
    if (valIdx.empty() || restIdx.empty())
        throw std::invalid_argument("splitValidation: split left an empty side");
    std::sort(valIdx.begin(), valIdx.end());
    std::sort(restIdx.begin(), restIdx.end());
    return {data.select(valIdx), data.select(restIdx)};
}

/// Adds level * sigma_column * N(0,1) to every feature entry, where sigma is
/// the per-column standard deviation of the clean shard. Labels untouched.
inline LabeledDataset addFeatureNoise(const LabeledDataset& shard, double level,
                                      std::uint64_t seed) {
    if (level < 0.0) throw std::invalid_argument("addFeatureNoise: level must be >= 0");
    LabeledDataset out = shard;
    if (level == 0.0 || shard.size() == 0) return out;

    const std::size_t n = shard.size();
    const std::size_t d = static_cast<std::size_t>(shard.numFeatures);
    std::vector<double> mean(d, 0.0), sigma(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = shard.row(i);
        for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
    }
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = shard.row(i);
        for (std::size_t j = 0; j < d; ++j) sigma[j] += (r[j] - mean[j]) * (r[j] - mean[j]);
    }
    for (std::size_t j = 0; j < d; ++j) sigma[j] = std::sqrt(sigma[j] / static_cast<double>(n));

    auto rng = makeEngine(seed);
    for (std::size_t i = 0; i < n; ++i) {
        double* r = out.row(i);
        for (std::size_t j = 0; j < d; ++j) r[j] += level * sigma[j] * nextNormal(rng);
    }
    return out;
}

/// Replaces the labels of a uniformly chosen floor(level * n) subset with a
/// uniformly random different class.
inline LabeledDataset addLabelNoise(const LabeledDataset& shard, double level,
                                    std::uint64_t seed) {
    if (level < 0.0 || level > 1.0)
        throw std::invalid_argument("addLabelNoise: level must be in [0,1]");
    LabeledDataset out = shard;
    const auto count = static_cast<std::size_t>(
        std::floor(level * static_cast<double>(shard.size()) + 1e-12));
    if (count == 0) return out;
    if (shard.numClasses < 2)
        throw std::invalid_argument("addLabelNoise: need at least 2 classes to flip labels");

    auto rng = makeEngine(seed);
    std::vector<int> all(shard.size());
    std::iota(all.begin(), all.end(), 0);
    const std::vector<int> chosen = sampleWithoutReplacement(rng, std::move(all), count);
    const int k = shard.numClasses;
    for (int idx : chosen) {
        const int old = out.labels[static_cast<std::size_t>(idx)];
        const int shift = 1 + static_cast<int>(nextBelow(rng, static_cast<std::uint64_t>(k - 1)));
        out.labels[static_cast<std::size_t>(idx)] = (old + shift) % k;
    }
    return out;
}

/// Splits `data` into numClients disjoint shards according to the scheme.
/// Every source row lands in exactly one shard.
inline std::vector<LabeledDataset> partition(const LabeledDataset& data,
                                             const PartitionScheme& scheme,
                                             std::uint64_t seed) {
    const int n = scheme.numClients;
    if (n < 2) throw std::invalid_argument("partition: numClients must be >= 2");
    auto rng = makeEngine(deriveSeed(seed, "partition-shuffle"));
    const auto pools = detail::shuffledClassPools(data, rng);
    std::vector<std::vector<int>> shardIdx(static_cast<std::size_t>(n));

    switch (scheme.kind) {
        case SchemeKind::SDSS:
        case SchemeKind::NFSS:
        case SchemeKind::NLSS: {
            // Equal sizes, stratified: deal the class-blocked sequence round-robin.
            std::size_t cursor = 0;
            for (const auto& pool : pools)
                for (int idx : pool) shardIdx[cursor++ % static_cast<std::size_t>(n)].push_back(idx);
            break;
        }
        case SchemeKind::SDDS: {
            if (static_cast<int>(scheme.sizeWeights.size()) != n)
                throw std::invalid_argument("partition: sizeWeights length != numClients");
            for (const auto& pool : pools) {
                const auto counts = detail::apportion(static_cast<int>(pool.size()), scheme.sizeWeights);
                std::size_t at = 0;
                for (int i = 0; i < n; ++i)
                    for (int c = 0; c < counts[static_cast<std::size_t>(i)]; ++c)
                        shardIdx[static_cast<std::size_t>(i)].push_back(pool[at++]);
            }
            break;
        }
        case SchemeKind::DDSS: {
            if (static_cast<int>(scheme.classSkew.size()) != n)
                throw std::invalid_argument("partition: classSkew needs one row per client");
            for (const auto& row : scheme.classSkew) {
                if (static_cast<int>(row.size()) != data.numClasses)
                    throw std::invalid_argument("partition: classSkew row length != numClasses");
                if (std::accumulate(row.begin(), row.end(), 0.0) <= 0.0)
                    throw std::invalid_argument("partition: classSkew row sums to zero");
            }
            // Class-major: each class pool is divided across clients in
            // proportion to that class's skew column, so no sample is dropped.
            for (int c = 0; c < data.numClasses; ++c) {
                const auto& pool = pools[static_cast<std::size_t>(c)];
                if (pool.empty()) continue;
                std::vector<double> column(static_cast<std::size_t>(n));
                for (int i = 0; i < n; ++i)
                    column[static_cast<std::size_t>(i)] = scheme.classSkew[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
                if (std::accumulate(column.begin(), column.end(), 0.0) <= 0.0)
                    throw std::invalid_argument("partition: class " + std::to_string(c) +
                                                " has zero total skew weight but non-empty pool");
                const auto counts = detail::apportion(static_cast<int>(pool.size()), column);
                std::size_t at = 0;
                for (int i = 0; i < n; ++i)
                    for (int cnt = 0; cnt < counts[static_cast<std::size_t>(i)]; ++cnt)
                        shardIdx[static_cast<std::size_t>(i)].push_back(pool[at++]);
            }
            break;
        }
    }

    std::vector<LabeledDataset> shards;
    shards.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& idx = shardIdx[static_cast<std::size_t>(i)];
        if (idx.empty())
            throw std::invalid_argument("partition: client " + std::to_string(i) + " received an empty shard");
        std::sort(idx.begin(), idx.end());
        shards.push_back(data.select(idx));
    }

    if (scheme.kind == SchemeKind::NFSS || scheme.kind == SchemeKind::NLSS) {
        if (static_cast<int>(scheme.noiseLevels.size()) != n)
            throw std::invalid_argument("partition: noiseLevels length != numClients");
        for (int i = 0; i < n; ++i) {
            const double level = scheme.noiseLevels[static_cast<std::size_t>(i)];
            const std::uint64_t s = deriveSeed(seed, "client-noise", static_cast<std::uint64_t>(i));
            shards[static_cast<std::size_t>(i)] =
                scheme.kind == SchemeKind::NFSS
                    ? addFeatureNoise(shards[static_cast<std::size_t>(i)], level, s)
                    : addLabelNoise(shards[static_cast<std::size_t>(i)], level, s);
        }
    }
    return shards;
}

/// CSV loader: numeric feature columns, last column is the integer class
/// label. Row order is preserved; errors carry 1-based line numbers.
inline LabeledDataset loadCsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("loadCsv: cannot open " + path);

    auto parseCell = [&](std::string_view cell, int lineNo) -> double {
        const char* first = cell.data();
        const char* last = cell.data() + cell.size();
        while (first < last && (*first == ' ' || *first == '\t')) ++first;
        while (last > first && (*(last - 1) == ' ' || *(last - 1) == '\t' || *(last - 1) == '\r')) --last;
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || ptr != last || first == last)
            throw std::runtime_error(path + ":" + std::to_string(lineNo) + ": non-numeric value '" +
                                     std::string(cell) + "'");
        return value;
    };

    LabeledDataset data;
    std::string line;
    int lineNo = 0;
    int maxLabel = -1;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty() || line == "\r") continue;
        std::vector<double> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string_view cell =
                std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos
                                                                                : comma - start);
            cells.push_back(parseCell(cell, lineNo));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (cells.size() < 2)
            throw std::runtime_error(path + ":" + std::to_string(lineNo) +
                                     ": need at least one feature column and a label column");
        if (data.numFeatures == 0) {
            data.numFeatures = static_cast<int>(cells.size()) - 1;
        } else if (static_cast<int>(cells.size()) - 1 != data.numFeatures) {
            throw std::runtime_error(path + ":" + std::to_string(lineNo) + ": expected " +
                                     std::to_string(data.numFeatures + 1) + " columns, got " +
                                     std::to_string(cells.size()));
        }
        const double rawLabel = cells.back();
        const int label = static_cast<int>(std::llround(rawLabel));
        if (label < 0 || static_cast<double>(label) != rawLabel)
            throw std::runtime_error(path + ":" + std::to_string(lineNo) +
                                     ": label must be a non-negative integer");
        cells.pop_back();
        data.features.insert(data.features.end(), cells.begin(), cells.end());
        data.labels.push_back(label);
        maxLabel = std::max(maxLabel, label);
    }
    if (data.labels.empty()) throw std::runtime_error("loadCsv: " + path + " contains no data rows");
    data.numClasses = maxLabel + 1;
    return data;
}

}  // namespace dpvs
