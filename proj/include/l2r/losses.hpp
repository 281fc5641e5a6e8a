#pragma once

// Training objective: task cross-entropy plus the load-balancing and router
// z-loss auxiliaries. Reductions over tokens are means; the composition
// total = task + lambda_bal*bal + lambda_z*z is evaluated in exactly that
// order everywhere so the breakdown is bit-reproducible.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "l2r/gating.hpp"

namespace l2r {

/// Batch routing statistics: s_bar is the mean full-softmax probability per
/// expert, f the empirical top-k selection frequency. Raw logits are kept
/// for the z-loss.
struct BatchRoutingStats {
    std::size_t n_tokens = 0;
    Vec s_bar;                // length N, sums to 1
    Vec f;                    // length N, each in [0,1], sums to k
    std::vector<Vec> logits;  // T x N
};

inline BatchRoutingStats accumulate_stats(const std::vector<RoutingDecision>& decisions,
                                          std::size_t n_experts) {
    if (decisions.empty()) throw std::invalid_argument("accumulate_stats: empty batch");
    BatchRoutingStats st;
    st.n_tokens = decisions.size();
    st.s_bar.assign(n_experts, 0.0);
    st.f.assign(n_experts, 0.0);
    st.logits.reserve(decisions.size());
    for (const RoutingDecision& d : decisions) {
        if (d.scores.size() != n_experts)
            throw std::invalid_argument("accumulate_stats: decision width mismatch");
        for (std::size_t i = 0; i < n_experts; ++i) st.s_bar[i] += d.scores[i];
        for (std::size_t i : d.selected) st.f[i] += 1.0;
        st.logits.push_back(d.logits);
    }
    const double inv = 1.0 / static_cast<double>(st.n_tokens);
    for (std::size_t i = 0; i < n_experts; ++i) {
        st.s_bar[i] *= inv;
        st.f[i] *= inv;
    }
    return st;
}

/// N * sum_i s_bar_i * f_i
inline double load_balance_loss(const BatchRoutingStats& stats, std::size_t n_experts) {
    if (stats.s_bar.size() != n_experts || stats.f.size() != n_experts)
        throw std::invalid_argument("load_balance_loss: stats width != N");
    double acc = 0.0;
    for (std::size_t i = 0; i < n_experts; ++i) acc += stats.s_bar[i] * stats.f[i];
    return static_cast<double>(n_experts) * acc;
}

/// (1/T) * sum_t (logsumexp(z_t))^2
inline double z_loss(const std::vector<Vec>& logits_batch) {
    if (logits_batch.empty()) throw std::invalid_argument("z_loss: empty batch");
    double acc = 0.0;
    for (const Vec& z : logits_batch) {
        const double l = logsumexp(z);
        acc += l * l;
    }
    return acc / static_cast<double>(logits_batch.size());
}

/// -log softmax(pred)[label]
inline double task_loss_ce(const Vec& pred_logits, std::size_t label) {
    if (pred_logits.size() < 2) throw std::invalid_argument("task_loss_ce: need >= 2 classes");
    if (label >= pred_logits.size())
        throw std::invalid_argument("task_loss_ce: label " + std::to_string(label) +
                                    " out of range (C=" + std::to_string(pred_logits.size()) + ")");
    double m = pred_logits[0];
    for (double v : pred_logits) m = std::max(m, v);
    double acc = 0.0;
    for (double v : pred_logits) acc += std::exp(v - m);
    return std::log(acc) - (pred_logits[label] - m);
}

struct LossBreakdown {
    double task = 0.0;
    double bal = 0.0;
    double z = 0.0;
    double total = 0.0;
    double lambda_bal = 0.0;
    double lambda_z = 0.0;
};

inline LossBreakdown total_loss(double task, const BatchRoutingStats& stats,
                                const std::vector<Vec>& logits_batch, double lambda_bal,
                                double lambda_z) {
    if (lambda_bal < 0.0 || lambda_z < 0.0)
        throw std::invalid_argument("total_loss: loss weights must be >= 0");
    LossBreakdown b;
    b.task = task;
    b.bal = load_balance_loss(stats, stats.s_bar.size());
    b.z = z_loss(logits_batch);
    b.lambda_bal = lambda_bal;
    b.lambda_z = lambda_z;
    b.total = b.task + b.lambda_bal * b.bal + b.lambda_z * b.z;
    return b;
}

}  // namespace l2r
