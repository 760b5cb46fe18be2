#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpvs/dataset.hpp"
#include "dpvs/rng.hpp"

namespace dpvs {

// Minimal deterministic classifier: multinomial logistic regression when
// hiddenDim == 0, otherwise a one-hidden-layer tanh perceptron. Parameters
// live in one flat vector so client updates are plain vector deltas.

struct ModelLayout {
    int inputDim = 0;
    int hiddenDim = 0;  // 0 means linear model
    int numClasses = 0;

    std::size_t paramCount() const {
        const std::size_t d = static_cast<std::size_t>(inputDim);
        const std::size_t h = static_cast<std::size_t>(hiddenDim);
        const std::size_t k = static_cast<std::size_t>(numClasses);
        if (hiddenDim == 0) return d * k + k;
        return d * h + h + h * k + k;
    }

    void validate() const {
        if (inputDim < 1 || numClasses < 1 || hiddenDim < 0)
            throw std::invalid_argument("ModelLayout: dims must be positive (hiddenDim may be 0)");
    }

    bool operator==(const ModelLayout&) const = default;
};

struct ModelParams {
    ModelLayout layout;
    std::vector<double> values;
};

/// One client's signed parameter delta for one round.
struct GradientUpdate {
    int clientId = 0;
    std::vector<double> delta;
    long long numSamples = 0;
    int round = 0;
};

struct EvalRecord {
    int sampleIndex = 0;
    bool correct = false;
    double confidence = 0.0;  // predicted-class softmax probability
};

struct EvalReport {
    std::vector<EvalRecord> records;
    double accuracy = 0.0;  // percent, [0,100]
};

/// Weight entries are uniform in [-1/sqrt(fanIn), 1/sqrt(fanIn)], layer by
/// layer in storage order. Deterministic per seed.
inline ModelParams initModel(const ModelLayout& layout, std::uint64_t seed) {
    layout.validate();
    ModelParams params{layout, std::vector<double>(layout.paramCount())};
    auto rng = makeEngine(seed);
    auto fill = [&rng](std::span<double> block, int fanIn) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fanIn));
        for (double& v : block) v = (2.0 * nextUnit(rng) - 1.0) * bound;
    };
    const std::size_t d = static_cast<std::size_t>(layout.inputDim);
    const std::size_t h = static_cast<std::size_t>(layout.hiddenDim);
    const std::size_t k = static_cast<std::size_t>(layout.numClasses);
    std::span<double> all(params.values);
    if (layout.hiddenDim == 0) {
        fill(all.subspan(0, d * k + k), layout.inputDim);
    } else {
        fill(all.subspan(0, d * h + h), layout.inputDim);
        fill(all.subspan(d * h + h, h * k + k), layout.hiddenDim);
    }
    return params;
}

namespace detail {

// Parameter blocks inside the flat vector.
// linear:  W [k x d] row-major, b [k]
// hidden:  W1 [h x d], b1 [h], W2 [k x h], b2 [k]
inline void computeLogits(const ModelParams& p, const double* x,
                          std::vector<double>& hidden, std::vector<double>& logits) {
    const int d = p.layout.inputDim;
    const int h = p.layout.hiddenDim;
    const int k = p.layout.numClasses;
    const double* v = p.values.data();
    logits.assign(static_cast<std::size_t>(k), 0.0);
    if (h == 0) {
        const double* b = v + static_cast<std::size_t>(k) * d;
        for (int c = 0; c < k; ++c) {
            double z = b[c];
            const double* w = v + static_cast<std::size_t>(c) * d;
            for (int j = 0; j < d; ++j) z += w[j] * x[j];
            logits[static_cast<std::size_t>(c)] = z;
        }
        return;
    }
    const double* w1 = v;
    const double* b1 = v + static_cast<std::size_t>(h) * d;
    const double* w2 = b1 + h;
    const double* b2 = w2 + static_cast<std::size_t>(k) * h;
    hidden.assign(static_cast<std::size_t>(h), 0.0);
    for (int u = 0; u < h; ++u) {
        double z = b1[u];
        const double* w = w1 + static_cast<std::size_t>(u) * d;
        for (int j = 0; j < d; ++j) z += w[j] * x[j];
        hidden[static_cast<std::size_t>(u)] = std::tanh(z);
    }
    for (int c = 0; c < k; ++c) {
        double z = b2[c];
        const double* w = w2 + static_cast<std::size_t>(c) * h;
        for (int u = 0; u < h; ++u) z += w[u] * hidden[static_cast<std::size_t>(u)];
        logits[static_cast<std::size_t>(c)] = z;
    }
}

inline void softmaxInPlace(std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& z : logits) {
        z = std::exp(z - m);
        sum += z;
    }
    for (double& z : logits) z /= sum;
}

// Accumulates the cross-entropy gradient of one sample into grad.
inline void accumulateGradient(const ModelParams& p, const double* x, int label,
                               const std::vector<double>& hidden,
                               const std::vector<double>& probs, std::vector<double>& grad) {
    const int d = p.layout.inputDim;
    const int h = p.layout.hiddenDim;
    const int k = p.layout.numClasses;
    if (h == 0) {
        double* gw = grad.data();
        double* gb = grad.data() + static_cast<std::size_t>(k) * d;
        for (int c = 0; c < k; ++c) {
            const double g = probs[static_cast<std::size_t>(c)] - (c == label ? 1.0 : 0.0);
            double* row = gw + static_cast<std::size_t>(c) * d;
            for (int j = 0; j < d; ++j) row[j] += g * x[j];
            gb[c] += g;
        }
        return;
    }
    const double* w2 = p.values.data() + static_cast<std::size_t>(h) * d + h;
    double* gw1 = grad.data();
    double* gb1 = grad.data() + static_cast<std::size_t>(h) * d;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + static_cast<std::size_t>(k) * h;
    std::vector<double> dh(static_cast<std::size_t>(h), 0.0);
    for (int c = 0; c < k; ++c) {
        const double g = probs[static_cast<std::size_t>(c)] - (c == label ? 1.0 : 0.0);
        double* row = gw2 + static_cast<std::size_t>(c) * h;
        const double* wrow = w2 + static_cast<std::size_t>(c) * h;
        for (int u = 0; u < h; ++u) {
            row[u] += g * hidden[static_cast<std::size_t>(u)];
            dh[static_cast<std::size_t>(u)] += g * wrow[u];
        }
        gb2[c] += g;
    }
    for (int u = 0; u < h; ++u) {
        const double hu = hidden[static_cast<std::size_t>(u)];
        const double dz = dh[static_cast<std::size_t>(u)] * (1.0 - hu * hu);
        double* row = gw1 + static_cast<std::size_t>(u) * d;
        for (int j = 0; j < d; ++j) row[j] += dz * x[j];
        gb1[u] += dz;
    }
}

}  // namespace detail

struct TrainOptions {
    int epochs = 1;
    double learningRate = 0.1;
    int batchSize = 32;
    std::uint64_t seed = 0;
};

/// Mini-batch gradient descent on softmax cross-entropy. Batch order is a
/// seeded shuffle per epoch, so identical inputs give bit-identical deltas.
inline GradientUpdate localTrain(const ModelParams& params, const LabeledDataset& shard,
                                 const TrainOptions& opt, int clientId = 0, int round = 0) {
    params.layout.validate();
    if (shard.size() == 0) throw std::invalid_argument("localTrain: shard is empty");
    if (shard.numFeatures != params.layout.inputDim)
        throw std::invalid_argument("localTrain: shard feature dim does not match model layout");
    if (opt.learningRate <= 0.0) throw std::invalid_argument("localTrain: lr must be positive");
    if (opt.epochs < 0) throw std::invalid_argument("localTrain: epochs must be non-negative");
    if (opt.batchSize < 1) throw std::invalid_argument("localTrain: batchSize must be positive");

    ModelParams work = params;
    auto rng = makeEngine(opt.seed);
    const std::size_t n = shard.size();
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    std::vector<double> hidden, probs;
    std::vector<double> grad(params.values.size());

    for (int e = 0; e < opt.epochs; ++e) {
        shuffleInPlace(rng, order);
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(opt.batchSize)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(opt.batchSize));
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t i = start; i < stop; ++i) {
                const int idx = order[i];
                const double* x = shard.row(static_cast<std::size_t>(idx));
                detail::computeLogits(work, x, hidden, probs);
                detail::softmaxInPlace(probs);
                detail::accumulateGradient(work, x, shard.labels[static_cast<std::size_t>(idx)],
                                           hidden, probs, grad);
            }
            const double scale = opt.learningRate / static_cast<double>(stop - start);
            for (std::size_t j = 0; j < grad.size(); ++j) work.values[j] -= scale * grad[j];
        }
    }

    GradientUpdate update;
    update.clientId = clientId;
    update.round = round;
    update.numSamples = static_cast<long long>(n);
    update.delta.resize(params.values.size());
    for (std::size_t j = 0; j < params.values.size(); ++j)
        update.delta[j] = work.values[j] - params.values[j];
    return update;
}

/// Sample-count-weighted FedAvg applied to the base parameters:
/// base + sum_i (n_i / sum_j n_j) * delta_i. Updates are ordered by client id
/// before accumulation so the result is invariant to input permutation.
inline ModelParams reconstructCoalitionModel(const ModelParams& base,
                                             std::span<const GradientUpdate> updates) {
    if (updates.empty())
        throw std::invalid_argument("reconstructCoalitionModel: empty coalition (caller handles M_empty)");
    std::vector<const GradientUpdate*> sorted;
    sorted.reserve(updates.size());
    long long totalSamples = 0;
    for (const GradientUpdate& u : updates) {
        if (u.delta.size() != base.values.size())
            throw std::invalid_argument("reconstructCoalitionModel: update layout mismatch");
        if (u.numSamples <= 0)
            throw std::invalid_argument("reconstructCoalitionModel: numSamples must be positive");
        if (u.round != updates.front().round)
            throw std::invalid_argument("reconstructCoalitionModel: updates from mixed rounds");
        totalSamples += u.numSamples;
        sorted.push_back(&u);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const GradientUpdate* a, const GradientUpdate* b) { return a->clientId < b->clientId; });

    std::vector<double> acc(base.values.size(), 0.0);
    for (const GradientUpdate* u : sorted) {
        const double coef = static_cast<double>(u->numSamples) / static_cast<double>(totalSamples);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += coef * u->delta[j];
    }
    ModelParams out = base;
    for (std::size_t j = 0; j < acc.size(); ++j) out.values[j] += acc[j];
    return out;
}

/// Runs the model on the given sample indices. Confidence is the softmax
/// probability of the predicted class; ties resolve to the lowest class id.
inline EvalReport evaluate(const ModelParams& params, const LabeledDataset& data,
                           std::span<const int> indices) {
    params.layout.validate();
    if (indices.empty()) throw std::invalid_argument("evaluate: empty sample subset");
    if (data.numFeatures != params.layout.inputDim)
        throw std::invalid_argument("evaluate: dataset feature dim does not match model layout");

    EvalReport report;
    report.records.reserve(indices.size());
    std::vector<double> hidden, probs;
    long long numCorrect = 0;
    for (int idx : indices) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= data.size())
            throw std::invalid_argument("evaluate: sample index out of range: " + std::to_string(idx));
        detail::computeLogits(params, data.row(static_cast<std::size_t>(idx)), hidden, probs);
        detail::softmaxInPlace(probs);
        int pred = 0;
        for (int c = 1; c < params.layout.numClasses; ++c)
            if (probs[static_cast<std::size_t>(c)] > probs[static_cast<std::size_t>(pred)]) pred = c;
        const bool correct = pred == data.labels[static_cast<std::size_t>(idx)];
        numCorrect += correct ? 1 : 0;
        report.records.push_back({idx, correct, probs[static_cast<std::size_t>(pred)]});
    }
    report.accuracy =
        100.0 * static_cast<double>(numCorrect) / static_cast<double>(indices.size());
    return report;
}

inline EvalReport evaluateAll(const ModelParams& params, const LabeledDataset& data) {
    std::vector<int> indices(data.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);
    return evaluate(params, data, indices);
}

}  // namespace dpvs
