#pragma once

// Routing-geometry measurements: pairwise cosine-similarity variance,
// fixed-anchor score landscapes, expert-usage statistics and the PCA export.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "l2r/core.hpp"
#include "l2r/gating.hpp"
#include "l2r/routing.hpp"

namespace l2r {

struct ConcentrationReport {
    double variance = 0.0;
    std::size_t n_pairs = 0;
    std::size_t dimension = 0;
    double isotropic_reference = 0.0;  // 1/r; 0.5 in the 2-D routing space
    std::size_t n_zero_skipped = 0;
};

/// Variance of cos(theta) over unordered pairs. All pairs when their count
/// stays within max_pairs, otherwise a uniform subsample of pairs drawn from
/// rng. Zero vectors are skipped and counted.
inline ConcentrationReport pairwise_cosine_variance(const std::vector<Vec>& vectors,
                                                    std::size_t max_pairs, Rng& rng) {
    if (vectors.size() < 2)
        throw std::invalid_argument("pairwise_cosine_variance: need >= 2 vectors");
    std::vector<Vec> unit;
    unit.reserve(vectors.size());
    std::size_t skipped = 0;
    for (const Vec& v : vectors) {
        const double n = norm2(v);
        if (n < 1e-300) {
            ++skipped;
            continue;
        }
        Vec u = v;
        for (double& x : u) x /= n;
        unit.push_back(std::move(u));
    }
    const std::size_t n = unit.size();
    if (n < 2)
        throw std::invalid_argument("pairwise_cosine_variance: fewer than 2 nonzero vectors");

    double sum = 0.0, sum_sq = 0.0;
    std::size_t pairs = 0;
    const std::size_t all_pairs = n * (n - 1) / 2;
    if (all_pairs <= max_pairs) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double c = dot(unit[i], unit[j]);
                sum += c;
                sum_sq += c * c;
                ++pairs;
            }
    } else {
        for (std::size_t s = 0; s < max_pairs; ++s) {
            const std::size_t i = static_cast<std::size_t>(rng.below(n));
            std::size_t j = static_cast<std::size_t>(rng.below(n - 1));
            if (j >= i) ++j;
            const double c = dot(unit[i], unit[j]);
            sum += c;
            sum_sq += c * c;
            ++pairs;
        }
    }
    const double mean = sum / static_cast<double>(pairs);
    ConcentrationReport rep;
    rep.variance = std::max(sum_sq / static_cast<double>(pairs) - mean * mean, 0.0);
    rep.n_pairs = pairs;
    rep.dimension = unit[0].size();
    rep.isotropic_reference = 1.0 / static_cast<double>(rep.dimension);
    rep.n_zero_skipped = skipped;
    return rep;
}

/// Score field over a 2-D query plane under a fixed anchor. Values are
/// row-major with y as the outer index and x inner, each axis low to high.
struct LandscapeGrid {
    Vec anchor;  // in R^2
    double x_lo = -3.0, x_hi = 3.0;
    double y_lo = -3.0, y_hi = 3.0;
    std::size_t resolution = 121;
    std::vector<double> values;
    ScoreMode mode = ScoreMode::L2R_SIPS;
    double beta = 1.0;

    double x_at(std::size_t ix) const {
        return x_lo + (x_hi - x_lo) * static_cast<double>(ix) / static_cast<double>(resolution - 1);
    }
    double y_at(std::size_t iy) const {
        return y_lo + (y_hi - y_lo) * static_cast<double>(iy) / static_cast<double>(resolution - 1);
    }
    double at(std::size_t iy, std::size_t ix) const { return values[iy * resolution + ix]; }
};

/// Evaluates z(q, anchor) on the grid with norm_hat = ||q|| (identity
/// normalization, the visualization convention). Requires rank 2.
inline LandscapeGrid score_landscape(const Vec& anchor, const RouterConfig& cfg, double x_lo,
                                     double x_hi, double y_lo, double y_hi,
                                     std::size_t resolution) {
    if (cfg.r != 2)
        throw std::invalid_argument("score_landscape: rank must be 2, got " + std::to_string(cfg.r));
    if (anchor.size() != 2) throw std::invalid_argument("score_landscape: anchor must be 2-D");
    if (resolution < 2) throw std::invalid_argument("score_landscape: resolution must be >= 2");
    if (cfg.mode == ScoreMode::LINEAR)
        throw std::invalid_argument("score_landscape: linear mode has no anchor geometry");
    LandscapeGrid g;
    g.anchor = anchor;
    g.x_lo = x_lo;
    g.x_hi = x_hi;
    g.y_lo = y_lo;
    g.y_hi = y_hi;
    g.resolution = resolution;
    g.mode = cfg.mode;
    g.beta = cfg.beta;
    g.values.resize(resolution * resolution);
    Vec q(2);
    for (std::size_t iy = 0; iy < resolution; ++iy) {
        q[1] = g.y_at(iy);
        for (std::size_t ix = 0; ix < resolution; ++ix) {
            q[0] = g.x_at(ix);
            const double rho = norm2(q);
            g.values[iy * resolution + ix] = detail::anchor_logit(cfg.mode, q, anchor, rho, cfg);
        }
    }
    if (!all_finite(g.values))
        throw std::runtime_error("score_landscape: non-finite value in grid");
    return g;
}

/// Per-expert usage over a token batch. Sums: top1 -> 1, topk -> k,
/// importance -> 1. Importance is the mean full-softmax mass per expert;
/// exports carry that definition in their header.
struct UsageStats {
    Vec top1_freq;
    Vec topk_freq;
    Vec importance;
    std::size_t n_tokens = 0;
};

inline UsageStats expert_usage(const std::vector<RoutingDecision>& decisions,
                               std::size_t n_experts) {
    if (decisions.empty()) throw std::invalid_argument("expert_usage: need >= 1 decision");
    UsageStats st;
    st.top1_freq.assign(n_experts, 0.0);
    st.topk_freq.assign(n_experts, 0.0);
    st.importance.assign(n_experts, 0.0);
    st.n_tokens = decisions.size();
    for (const RoutingDecision& d : decisions) {
        if (d.scores.size() != n_experts)
            throw std::invalid_argument("expert_usage: decision width mismatch");
        st.top1_freq[d.selected[0]] += 1.0;
        for (std::size_t i : d.selected) st.topk_freq[i] += 1.0;
        for (std::size_t i = 0; i < n_experts; ++i) st.importance[i] += d.scores[i];
    }
    const double inv = 1.0 / static_cast<double>(st.n_tokens);
    for (std::size_t i = 0; i < n_experts; ++i) {
        st.top1_freq[i] *= inv;
        st.topk_freq[i] *= inv;
        st.importance[i] *= inv;
    }
    return st;
}

/// Shannon entropy in nats with 0*ln(0) = 0.
inline double entropy_nats(const Vec& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

inline std::pair<double, double> usage_entropy(const UsageStats& st) {
    return {entropy_nats(st.top1_freq), entropy_nats(st.importance)};
}

/// One exported row per token: backbone-space PCA coordinates, routing-space
/// coordinates (raw q when r = 2, else PCA of q), and the top-1 expert.
struct PcaExportRow {
    double x_pc1 = 0.0, x_pc2 = 0.0;
    double q1 = 0.0, q2 = 0.0;
    std::size_t top1 = 0;
};

inline std::vector<PcaExportRow> export_routing_pca(const std::vector<Vec>& tokens,
                                                    const std::vector<Vec>& queries,
                                                    const std::vector<RoutingDecision>& decisions) {
    if (tokens.size() != queries.size() || tokens.size() != decisions.size())
        throw std::invalid_argument("export_routing_pca: list lengths differ (" +
                                    std::to_string(tokens.size()) + ", " +
                                    std::to_string(queries.size()) + ", " +
                                    std::to_string(decisions.size()) + ")");
    Pca2Result px = pca2(tokens);
    std::vector<Vec> qcols;
    const bool q_raw = !queries.empty() && queries[0].size() == 2;
    if (!q_raw) {
        Pca2Result pq = pca2(queries);
        qcols = std::move(pq.projected);
    }
    std::vector<PcaExportRow> rows(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        rows[i].x_pc1 = px.projected[i][0];
        rows[i].x_pc2 = px.projected[i][1];
        rows[i].q1 = q_raw ? queries[i][0] : qcols[i][0];
        rows[i].q2 = q_raw ? queries[i][1] : qcols[i][1];
        rows[i].top1 = decisions[i].selected[0];
    }
    return rows;
}

}  // namespace l2r
