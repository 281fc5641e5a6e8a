#pragma once

// Softmax-with-temperature, deterministic top-k selection and the sparse
// mixture forward pass y = x + sum_{i in T} s_i * E_i(x).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "l2r/core.hpp"
#include "l2r/routing.hpp"

namespace l2r {

/// Routing outcome for one token. Gate weights are the raw softmax scores at
/// the selected indices; no renormalization over the selected set.
struct RoutingDecision {
    Vec logits;
    Vec scores;                        // full softmax, sums to 1
    std::vector<std::size_t> selected; // k indices, descending score, ties by index
    Vec gate_weights;                  // scores at selected indices
};

/// s_i = exp(z_i / tau) / sum_j exp(z_j / tau), max-shifted.
inline Vec softmax_temp(const Vec& z, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("softmax_temp: tau must be > 0");
    if (z.empty()) throw std::invalid_argument("softmax_temp: empty logits");
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    Vec s(z.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        s[i] = std::exp((z[i] - m) / tau);
        acc += s[i];
    }
    for (double& v : s) v /= acc;
    return s;
}

/// Indices of the k largest scores, descending by score; ties break toward
/// the smaller index. Stable and deterministic.
inline std::vector<std::size_t> top_k_select(const Vec& s, std::size_t k) {
    if (k < 1 || k > s.size())
        throw std::invalid_argument("top_k_select: k=" + std::to_string(k) +
                                    " outside [1, " + std::to_string(s.size()) + "]");
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    idx.resize(k);
    return idx;
}

/// Full decision for one logit vector. The optional renormalized variant
/// rescales the selected gates to sum to 1; it is not the default.
inline RoutingDecision make_decision(const Vec& logits, double tau, std::size_t k,
                                     bool renormalize_topk = false) {
    RoutingDecision d;
    d.logits = logits;
    d.scores = softmax_temp(logits, tau);
    d.selected = top_k_select(d.scores, k);
    d.gate_weights.reserve(k);
    for (std::size_t i : d.selected) d.gate_weights.push_back(d.scores[i]);
    if (renormalize_topk) {
        double acc = 0.0;
        for (double g : d.gate_weights) acc += g;
        if (acc > 0.0)
            for (double& g : d.gate_weights) g /= acc;
    }
    return d;
}

/// Affine expert E(x) = W x + b with W in R^{d x d}.
struct AffineExpert {
    Mat w;  // d x d
    Vec b;  // d

    Vec operator()(const Vec& x) const {
        Vec y = matvec(w, x);
        for (std::size_t j = 0; j < y.size(); ++j) y[j] += b[j];
        return y;
    }
};

struct ExpertBank {
    std::vector<AffineExpert> experts;

    std::size_t size() const { return experts.size(); }
    std::size_t dim() const { return experts.empty() ? 0 : experts[0].b.size(); }

    static ExpertBank zeros(std::size_t n, std::size_t d) {
        ExpertBank bank;
        bank.experts.assign(n, AffineExpert{Mat(d, d), Vec(d, 0.0)});
        return bank;
    }
};

/// y = x + sum over selected experts of gate * E_i(x). Only selected experts
/// are evaluated; eval_count (when given) is bumped once per evaluation.
inline Vec moe_forward(const Vec& x, const ExpertBank& bank, const RoutingDecision& decision,
                       std::uint64_t* eval_count = nullptr) {
    Vec y = x;
    for (std::size_t j = 0; j < decision.selected.size(); ++j) {
        const std::size_t i = decision.selected[j];
        if (i >= bank.size())
            throw std::invalid_argument("moe_forward: expert index " + std::to_string(i) +
                                        " out of range (N=" + std::to_string(bank.size()) + ")");
        const Vec e = bank.experts[i](x);
        if (e.size() != y.size())
            throw std::invalid_argument("moe_forward: expert output dim mismatch");
        const double g = decision.gate_weights[j];
        for (std::size_t t = 0; t < y.size(); ++t) y[t] += g * e[t];
        if (eval_count) ++*eval_count;
    }
    return y;
}

/// route_logits -> softmax -> top-k -> sparse mixture, in that order.
inline std::pair<RoutingDecision, Vec> route_token(const Vec& x, const RouterState& state,
                                                   const ExpertBank& bank, const RouterConfig& cfg,
                                                   bool renormalize_topk = false,
                                                   std::uint64_t* eval_count = nullptr) {
    const Vec z = route_logits(x, state, cfg);
    RoutingDecision d = make_decision(z, cfg.tau, cfg.top_k, renormalize_topk);
    Vec y = moe_forward(x, bank, d, eval_count);
    return {std::move(d), std::move(y)};
}

}  // namespace l2r
