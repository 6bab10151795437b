#pragma once

#include <cmath>
#include <vector>

#include "soli/error.hpp"
#include "soli/tensor.hpp"
#include "soli/vocab.hpp"

namespace soli {

// Scalar objective with its weighted breakdown. The identity
// value == gamma * contrastive + lambda * cross_entropy holds for every
// loss produced here; single-objective losses use degenerate weights.
struct LossValue {
    double value = 0.0;
    double contrastive = 0.0;
    double cross_entropy = 0.0;
    double gamma = 0.0;
    double lambda = 0.0;
};

inline LossValue make_cross_entropy_loss(double ce) {
    return LossValue{ce, 0.0, ce, 0.0, 1.0};
}
inline LossValue make_contrastive_loss(double c) {
    return LossValue{c, c, 0.0, 1.0, 0.0};
}

// Weighted combination of the two objectives.
inline LossValue soli_loss(const LossValue& contrastive, const LossValue& cross_entropy,
                           double gamma, double lambda) {
    if (gamma < 0.0 || lambda < 0.0)
        throw ArgumentError("loss weights must be >= 0");
    if (gamma == 0.0 && lambda == 0.0)
        throw ConfigError("gamma and lambda cannot both be zero");
    LossValue out;
    out.contrastive = contrastive.value;
    out.cross_entropy = cross_entropy.value;
    out.gamma = gamma;
    out.lambda = lambda;
    out.value = gamma * contrastive.value + lambda * cross_entropy.value;
    return out;
}

// ---------------------------------------------------------------------------
// Cross-entropy over teacher-forced logits
// ---------------------------------------------------------------------------

template <typename T>
struct CrossEntropyResult {
    LossValue loss;
    Tensor<T> grad_logits; // same shape as logits
    long positions = 0;    // non-pad targets
};

// Mean negative log-likelihood over non-pad target positions. Softmax is
// taken over the class axis; pad targets contribute nothing, including to
// the gradient.
template <typename T>
CrossEntropyResult<T> cross_entropy(const Tensor<T>& logits, const TokenBatch& targets,
                                    int pad_id = Vocabulary::kPad) {
    if (logits.shape.size() != 3)
        throw ArgumentError("cross_entropy: logits must be [B,T,M], got " +
                            logits.shape_str());
    const int B = logits.dim(0), Tn = logits.dim(1), M = logits.dim(2);
    if (targets.batch != B || targets.len != Tn)
        throw ArgumentError("cross_entropy: target batch " + std::to_string(targets.batch) +
                            "x" + std::to_string(targets.len) + " does not match logits " +
                            logits.shape_str());

    long count = 0;
    for (int id : targets.ids) {
        if (id >= M)
            throw ArgumentError("cross_entropy: target id " + std::to_string(id) +
                                " outside vocabulary of size " + std::to_string(M));
        if (id != pad_id) ++count;
    }
    if (count == 0) throw ArgumentError("cross_entropy: degenerate batch, all targets are pad");

    CrossEntropyResult<T> res;
    res.positions = count;
    res.grad_logits = Tensor<T>(logits.shape);
    double nll = 0.0;
    const double inv = 1.0 / static_cast<double>(count);

    std::vector<double> prob(static_cast<std::size_t>(M));
    for (int n = 0; n < B; ++n)
        for (int t = 0; t < Tn; ++t) {
            const int target = targets.at(n, t);
            if (target == pad_id) continue;
            double mx = -std::numeric_limits<double>::infinity();
            for (int m = 0; m < M; ++m)
                mx = std::max(mx, static_cast<double>(logits.at(n, t, m)));
            double z = 0.0;
            for (int m = 0; m < M; ++m) {
                prob[static_cast<std::size_t>(m)] =
                    std::exp(static_cast<double>(logits.at(n, t, m)) - mx);
                z += prob[static_cast<std::size_t>(m)];
            }
            nll -= std::log(prob[static_cast<std::size_t>(target)] / z);
            for (int m = 0; m < M; ++m)
                res.grad_logits.at(n, t, m) = static_cast<T>(
                    (prob[static_cast<std::size_t>(m)] / z - (m == target ? 1.0 : 0.0)) * inv);
        }

    res.loss = make_cross_entropy_loss(nll * inv);
    return res;
}

// ---------------------------------------------------------------------------
// Euclidean distance and contrastive loss
// ---------------------------------------------------------------------------

template <typename T>
std::vector<double> euclidean_distance(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape)
        throw ArgumentError("euclidean_distance: shape mismatch " + a.shape_str() +
                            " vs " + b.shape_str());
    if (a.shape.size() != 2)
        throw ArgumentError("euclidean_distance: expected [N,E], got " + a.shape_str());
    const int N = a.dim(0), E = a.dim(1);
    std::vector<double> d(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        double acc = 0.0;
        for (int e = 0; e < E; ++e) {
            const double diff = static_cast<double>(a.at(i, e)) - static_cast<double>(b.at(i, e));
            acc += diff * diff;
        }
        d[static_cast<std::size_t>(i)] = std::sqrt(acc);
    }
    return d;
}

template <typename T>
struct ContrastiveBatch {
    Tensor<T> a; // [N,E]
    Tensor<T> b; // [N,E]
    std::vector<int> labels; // 1 similar, 0 dissimilar
    double margin = 1.0;
};

template <typename T>
struct ContrastiveResult {
    LossValue loss;
    Tensor<T> grad_a;
    Tensor<T> grad_b;
    std::vector<double> distances;
};

// (1/N) * sum_i [ y_i D_i^2 + (1-y_i) max(0, m - D_i)^2 ] with D_i the
// row-wise Euclidean distance. The negative branch is flat beyond the
// margin and at D == 0 (subgradient zero).
template <typename T>
ContrastiveResult<T> contrastive(const ContrastiveBatch<T>& batch) {
    if (!(batch.margin > 0.0)) throw ArgumentError("contrastive: margin must be > 0");
    if (batch.a.shape.size() != 2 || batch.a.dim(0) < 1)
        throw ArgumentError("contrastive: expected [N,E] with N >= 1, got " +
                            batch.a.shape_str());
    if (batch.labels.size() != static_cast<std::size_t>(batch.a.dim(0)))
        throw ArgumentError("contrastive: label count does not match batch");
    for (int y : batch.labels)
        if (y != 0 && y != 1) throw ArgumentError("contrastive: labels must be 0 or 1");

    const int N = batch.a.dim(0), E = batch.a.dim(1);
    ContrastiveResult<T> res;
    res.distances = euclidean_distance(batch.a, batch.b);
    res.grad_a = Tensor<T>(batch.a.shape);
    res.grad_b = Tensor<T>(batch.b.shape);

    const double m = batch.margin;
    const double inv = 1.0 / static_cast<double>(N);
    double total = 0.0;
    for (int i = 0; i < N; ++i) {
        const double d = res.distances[static_cast<std::size_t>(i)];
        if (batch.labels[static_cast<std::size_t>(i)] == 1) {
            total += d * d;
            for (int e = 0; e < E; ++e) {
                const double diff =
                    static_cast<double>(batch.a.at(i, e)) - static_cast<double>(batch.b.at(i, e));
                const T g = static_cast<T>(2.0 * inv * diff);
                res.grad_a.at(i, e) += g;
                res.grad_b.at(i, e) -= g;
            }
        } else if (d < m) {
            const double slack = m - d;
            total += slack * slack;
            if (d > 0.0) {
                const double scale = -2.0 * inv * slack / d;
                for (int e = 0; e < E; ++e) {
                    const double diff = static_cast<double>(batch.a.at(i, e)) -
                                        static_cast<double>(batch.b.at(i, e));
                    const T g = static_cast<T>(scale * diff);
                    res.grad_a.at(i, e) += g;
                    res.grad_b.at(i, e) -= g;
                }
            }
        }
    }

    res.loss = make_contrastive_loss(total * inv);
    return res;
}

} // namespace soli
