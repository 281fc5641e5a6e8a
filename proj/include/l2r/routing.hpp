#pragma once

// Router configuration, expert anchors, and the scoring geometries:
// linear, cosine (X-MoE style), low-rank dot, low-rank cosine, and the
// saturated inner-product score with multi-anchor log-sum-exp pooling.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "l2r/core.hpp"

namespace l2r {

enum class ScoreMode { LINEAR, XMOE_COSINE, L2R_DOT, L2R_COSINE, L2R_SIPS };
enum class NormStyle { RMSNORM_INPUT, RUNNING_SCALAR_NORM, NONE };

inline std::string to_string(ScoreMode m) {
    switch (m) {
        case ScoreMode::LINEAR: return "linear";
        case ScoreMode::XMOE_COSINE: return "xmoe_cosine";
        case ScoreMode::L2R_DOT: return "l2r_dot";
        case ScoreMode::L2R_COSINE: return "l2r_cosine";
        case ScoreMode::L2R_SIPS: return "l2r_sips";
    }
    throw std::logic_error("to_string(ScoreMode): bad tag");
}

inline ScoreMode score_mode_from_string(const std::string& s) {
    if (s == "linear") return ScoreMode::LINEAR;
    if (s == "xmoe_cosine") return ScoreMode::XMOE_COSINE;
    if (s == "l2r_dot") return ScoreMode::L2R_DOT;
    if (s == "l2r_cosine") return ScoreMode::L2R_COSINE;
    if (s == "l2r_sips") return ScoreMode::L2R_SIPS;
    throw std::invalid_argument("unknown score mode: '" + s + "'");
}

inline std::string to_string(NormStyle s) {
    switch (s) {
        case NormStyle::RMSNORM_INPUT: return "rmsnorm_input";
        case NormStyle::RUNNING_SCALAR_NORM: return "running_scalar_norm";
        case NormStyle::NONE: return "none";
    }
    throw std::logic_error("to_string(NormStyle): bad tag");
}

inline NormStyle norm_style_from_string(const std::string& s) {
    if (s == "rmsnorm_input") return NormStyle::RMSNORM_INPUT;
    if (s == "running_scalar_norm") return NormStyle::RUNNING_SCALAR_NORM;
    if (s == "none") return NormStyle::NONE;
    throw std::invalid_argument("unknown norm style: '" + s + "'");
}

// eps used by the router-input RMSNorm (fixed; not a tunable)
inline constexpr double kRmsEps = 1e-6;

struct RouterConfig {
    std::size_t d = 32;   // backbone dimension
    std::size_t r = 2;    // routing rank
    std::size_t n_experts = 8;
    std::size_t n_anchors = 4;  // H, anchors per expert
    std::size_t top_k = 2;
    double gamma = 1.0;  // logit scale, > 0
    double beta = 1.0;   // magnitude participation, in [0,1]
    double p = 4.0;      // anchor norm compression, >= 1
    double tau = 1.0;    // softmax temperature, > 0
    double eps_q = 1e-6;
    double eps_k = 1e-6;
    ScoreMode mode = ScoreMode::L2R_SIPS;
    NormStyle norm_style = NormStyle::RMSNORM_INPUT;

    void validate() const {
        if (d == 0 || n_experts == 0) throw std::invalid_argument("RouterConfig: d and N must be positive");
        if (r > d) throw std::invalid_argument("RouterConfig: rank r=" + std::to_string(r) +
                                               " exceeds d=" + std::to_string(d));
        if (r == 0) throw std::invalid_argument("RouterConfig: r must be >= 1");
        if (top_k < 1 || top_k > n_experts)
            throw std::invalid_argument("RouterConfig: top_k=" + std::to_string(top_k) +
                                        " outside [1, " + std::to_string(n_experts) + "]");
        if (n_anchors < 1) throw std::invalid_argument("RouterConfig: H must be >= 1");
        if (!(gamma > 0.0)) throw std::invalid_argument("RouterConfig: gamma must be > 0");
        if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("RouterConfig: beta must be in [0,1]");
        if (p < 1.0) throw std::invalid_argument("RouterConfig: p must be >= 1");
        if (!(tau > 0.0)) throw std::invalid_argument("RouterConfig: tau must be > 0");
        if (!(eps_q > 0.0) || !(eps_k > 0.0))
            throw std::invalid_argument("RouterConfig: eps floors must be > 0");
    }
};

/// N x H anchors in routing space; anchors[i][h] is anchor h of expert i.
struct AnchorSet {
    std::vector<std::vector<Vec>> anchors;

    std::size_t n_experts() const { return anchors.size(); }
    std::size_t n_anchors() const { return anchors.empty() ? 0 : anchors[0].size(); }

    /// All anchors on the unit sphere in R^r.
    static AnchorSet init_unit_sphere(Rng& rng, std::size_t n_experts, std::size_t h,
                                      std::size_t r) {
        AnchorSet s;
        s.anchors.resize(n_experts);
        for (std::size_t i = 0; i < n_experts; ++i) {
            s.anchors[i].reserve(h);
            for (std::size_t j = 0; j < h; ++j) s.anchors[i].push_back(sample_unit_sphere(rng, r));
        }
        return s;
    }

    double max_norm() const {
        double m = 0.0;
        for (const auto& per_expert : anchors)
            for (const Vec& a : per_expert) m = std::max(m, norm2(a));
        return m;
    }
};

struct LinearRouterWeights {
    Mat w_g;  // d x N, column i is the anchor of expert i
};

struct LowRankProjection {
    Mat w_q;       // d x r
    Vec rms_gain;  // length d; used when norm_style == RMSNORM_INPUT
};

/// Running standardization of the scalar query norm (vision path).
/// Approximates BatchNorm on ||q|| with running statistics; scoring within a
/// step uses the stats as of the start of the step.
struct NormStandardizer {
    double running_mean = 0.0;
    double running_var = 1.0;
    double momentum = 0.1;
    bool frozen = false;

    double standardize(double rho) const {
        return (rho - running_mean) / std::sqrt(running_var + 1e-5);
    }
    /// d standardize / d rho — also the Lipschitz constant of the map.
    double slope() const { return 1.0 / std::sqrt(running_var + 1e-5); }

    /// Blend in one batch of observed norms. Not thread safe; exactly one
    /// updater may drive this.
    void update(const Vec& batch_norms) {
        if (frozen || batch_norms.empty()) return;
        double m = 0.0;
        for (double v : batch_norms) m += v;
        m /= static_cast<double>(batch_norms.size());
        double var = 0.0;
        for (double v : batch_norms) var += (v - m) * (v - m);
        var /= static_cast<double>(batch_norms.size());
        running_mean = (1.0 - momentum) * running_mean + momentum * m;
        running_var = (1.0 - momentum) * running_var + momentum * var;
        if (running_var < 0.0) running_var = 0.0;
    }
};

struct LatentRouterState {
    LowRankProjection proj;
    AnchorSet anchors;
    NormStandardizer norm;
};

using RouterState = std::variant<LinearRouterWeights, LatentRouterState>;

/// Bounded query magnitude transform gamma * (1 + beta * tanh(norm_hat)).
/// Total on all inputs; range is [gamma(1-beta), gamma(1+beta)].
inline double phi(double norm_hat, double gamma, double beta) {
    return gamma * (1.0 + beta * std::tanh(norm_hat));
}

/// d phi / d norm_hat
inline double phi_prime(double norm_hat, double gamma, double beta) {
    const double t = std::tanh(norm_hat);
    return gamma * beta * (1.0 - t * t);
}

/// Anchor norm compression 1 + (kappa - 1)/p, centered at 1 on the unit sphere.
inline double psi(double kappa, double p) { return 1.0 + (kappa - 1.0) / p; }

/// Angular term with eps-clamped norms; always in [-1, 1].
inline double cosine_logit(const Vec& q, const Vec& k, const RouterConfig& cfg) {
    const double rho = std::max(norm2(q), cfg.eps_q);
    const double kappa = std::max(norm2(k), cfg.eps_k);
    return dot(q, k) / (rho * kappa);
}

/// Saturated inner-product score phi(norm_hat) * psi(||k||) * cos(theta).
inline double sips_logit(const Vec& q, const Vec& k, double norm_hat, const RouterConfig& cfg) {
    const double kappa = norm2(k);
    return phi(norm_hat, cfg.gamma, cfg.beta) * psi(kappa, cfg.p) * cosine_logit(q, k, cfg);
}

/// log sum_h exp(z_h), max-shifted. H = 1 returns the logit unchanged.
inline double logsumexp(const std::vector<double>& z) {
    if (z.empty()) throw std::invalid_argument("logsumexp: empty input");
    if (z.size() == 1) return z[0];
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double acc = 0.0;
    for (double v : z) acc += std::exp(v - m);
    return m + std::log(acc);
}

namespace detail {

/// norm_hat for a projected query of norm rho under the configured style.
inline double norm_hat_of(double rho, NormStyle style, const NormStandardizer& norm) {
    switch (style) {
        case NormStyle::RMSNORM_INPUT: return rho;  // input already RMS-normalized
        case NormStyle::RUNNING_SCALAR_NORM: return norm.standardize(rho);
        case NormStyle::NONE: return rho;
    }
    throw std::logic_error("norm_hat_of: bad style");
}

/// Per-anchor logit under the mode's scorer (latent modes only).
inline double anchor_logit(ScoreMode mode, const Vec& q, const Vec& k, double norm_hat,
                           const RouterConfig& cfg) {
    switch (mode) {
        case ScoreMode::XMOE_COSINE:
        case ScoreMode::L2R_COSINE: return cosine_logit(q, k, cfg);
        case ScoreMode::L2R_DOT: return dot(q, k);
        case ScoreMode::L2R_SIPS: return sips_logit(q, k, norm_hat, cfg);
        case ScoreMode::LINEAR: break;
    }
    throw std::logic_error("anchor_logit: linear mode has no anchors");
}

}  // namespace detail

/// Expert logit pooled over that expert's anchors via log-sum-exp.
/// Satisfies max_h z_h <= result <= max_h z_h + ln(H).
inline double multi_anchor_logit(const Vec& q, const std::vector<Vec>& anchors_i, double norm_hat,
                                 const RouterConfig& cfg) {
    if (anchors_i.empty()) throw std::invalid_argument("multi_anchor_logit: H must be >= 1");
    std::vector<double> z;
    z.reserve(anchors_i.size());
    for (const Vec& k : anchors_i)
        z.push_back(detail::anchor_logit(cfg.mode, q, k, norm_hat, cfg));
    return logsumexp(z);
}

/// q = rmsnorm(x) * W_q when the RMSNorm style is active, else q = x * W_q.
inline Vec project_query(const Vec& x, const LowRankProjection& proj, const RouterConfig& cfg) {
    if (x.size() != proj.w_q.rows)
        throw std::invalid_argument("project_query: input length " + std::to_string(x.size()) +
                                    " != projection rows " + std::to_string(proj.w_q.rows));
    if (cfg.norm_style == NormStyle::RMSNORM_INPUT)
        return vecmat(rmsnorm(x, proj.rms_gain, kRmsEps), proj.w_q);
    return vecmat(x, proj.w_q);
}

/// z = x * W_g
inline Vec linear_logits(const Vec& x, const LinearRouterWeights& w) {
    return vecmat(x, w.w_g);
}

/// Dispatch over ScoreMode: length-N logit vector for one token.
inline Vec route_logits(const Vec& x, const RouterState& state, const RouterConfig& cfg) {
    if (cfg.mode == ScoreMode::LINEAR) {
        const auto* lin = std::get_if<LinearRouterWeights>(&state);
        if (!lin) throw std::invalid_argument("route_logits: linear mode needs LinearRouterWeights");
        if (lin->w_g.cols != cfg.n_experts)
            throw std::invalid_argument("route_logits: W_g has " + std::to_string(lin->w_g.cols) +
                                        " columns, config has N=" + std::to_string(cfg.n_experts));
        return linear_logits(x, *lin);
    }
    const auto* lat = std::get_if<LatentRouterState>(&state);
    if (!lat) throw std::invalid_argument("route_logits: latent mode needs LatentRouterState");
    if (lat->anchors.n_experts() != cfg.n_experts)
        throw std::invalid_argument("route_logits: anchor set has " +
                                    std::to_string(lat->anchors.n_experts()) +
                                    " experts, config has N=" + std::to_string(cfg.n_experts));
    if (lat->anchors.n_anchors() != cfg.n_anchors)
        throw std::invalid_argument("route_logits: anchor set has H=" +
                                    std::to_string(lat->anchors.n_anchors()) +
                                    ", config has H=" + std::to_string(cfg.n_anchors));
    if (cfg.mode == ScoreMode::XMOE_COSINE && cfg.n_anchors != 1)
        throw std::invalid_argument("route_logits: xmoe_cosine is a single-anchor baseline (H=1)");

    const Vec q = project_query(x, lat->proj, cfg);
    const double norm_hat = detail::norm_hat_of(norm2(q), cfg.norm_style, lat->norm);
    Vec z(cfg.n_experts, 0.0);
    for (std::size_t i = 0; i < cfg.n_experts; ++i)
        z[i] = multi_anchor_logit(q, lat->anchors.anchors[i], norm_hat, cfg);
    return z;
}

}  // namespace l2r
