#pragma once

// Toy MoE model (router + affine experts + linear task head) with a
// hand-derived backward pass through the full objective. Top-k selection is
// treated as piecewise constant: within a step the selection is fixed and
// gradients flow through the selected softmax scores only.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "l2r/calculus.hpp"
#include "l2r/core.hpp"
#include "l2r/gating.hpp"
#include "l2r/losses.hpp"
#include "l2r/routing.hpp"

namespace l2r {

struct Sample {
    Vec x;
    std::size_t label = 0;
};

struct ToyMoEModel {
    RouterConfig cfg;
    RouterState router;
    ExpertBank bank;
    Mat head_w;  // C x d
    Vec head_b;  // C
    std::size_t n_classes = 0;

    bool is_linear() const { return cfg.mode == ScoreMode::LINEAR; }

    Vec predict(const Vec& x) const {
        auto [d, y] = route_token(x, router, bank, cfg);
        (void)d;
        Vec pred = matvec(head_w, y);
        for (std::size_t c = 0; c < pred.size(); ++c) pred[c] += head_b[c];
        return pred;
    }
};

/// Experts and head start at zero so the MoE layer opens as the identity and
/// the initial prediction is uniform; router weights are Gaussian 1/sqrt(d),
/// anchors on the unit sphere.
inline ToyMoEModel init_toy_model(const RouterConfig& cfg, std::size_t n_classes, Rng& rng) {
    cfg.validate();
    if (n_classes < 2) throw std::invalid_argument("init_toy_model: need >= 2 classes");
    ToyMoEModel m;
    m.cfg = cfg;
    m.n_classes = n_classes;
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
    if (cfg.mode == ScoreMode::LINEAR) {
        Rng r = rng.split("model/w_g");
        LinearRouterWeights w;
        w.w_g = Mat(cfg.d, cfg.n_experts);
        for (double& v : w.w_g.data) v = scale * r.normal();
        m.router = std::move(w);
    } else {
        Rng rw = rng.split("model/w_q");
        Rng ra = rng.split("model/anchors");
        LatentRouterState st;
        st.proj.w_q = Mat(cfg.d, cfg.r);
        for (double& v : st.proj.w_q.data) v = scale * rw.normal();
        st.proj.rms_gain = Vec(cfg.d, 1.0);
        st.anchors = AnchorSet::init_unit_sphere(ra, cfg.n_experts, cfg.n_anchors, cfg.r);
        m.router = std::move(st);
    }
    m.bank = ExpertBank::zeros(cfg.n_experts, cfg.d);
    m.head_w = Mat(n_classes, cfg.d);
    m.head_b = Vec(n_classes, 0.0);
    return m;
}

struct ModelGrads {
    Mat w_g;                                // linear mode
    Mat w_q;                                // latent modes
    Vec rms_gain;
    std::vector<std::vector<Vec>> anchors;  // N x H x r
    std::vector<Mat> expert_w;
    std::vector<Vec> expert_b;
    Mat head_w;
    Vec head_b;

    static ModelGrads zeros_like(const ToyMoEModel& m) {
        ModelGrads g;
        const RouterConfig& cfg = m.cfg;
        if (m.is_linear()) {
            g.w_g = Mat(cfg.d, cfg.n_experts);
        } else {
            g.w_q = Mat(cfg.d, cfg.r);
            g.rms_gain = Vec(cfg.d, 0.0);
            g.anchors.assign(cfg.n_experts, std::vector<Vec>(cfg.n_anchors, Vec(cfg.r, 0.0)));
        }
        g.expert_w.assign(cfg.n_experts, Mat(cfg.d, cfg.d));
        g.expert_b.assign(cfg.n_experts, Vec(cfg.d, 0.0));
        g.head_w = Mat(m.head_w.rows, m.head_w.cols);
        g.head_b = Vec(m.head_b.size(), 0.0);
        return g;
    }
};

namespace detail {

struct TokenTrace {
    Vec x_n;        // router input after optional RMSNorm (empty for linear mode)
    double rms = 1.0;
    Vec q;
    double rho = 0.0;
    double norm_hat = 0.0;
    double slope = 1.0;                     // d norm_hat / d rho
    std::vector<std::vector<double>> anchor_logits;  // N x H
    RoutingDecision decision;
    Vec y;
    Vec pred;
};

inline TokenTrace trace_token(const ToyMoEModel& m, const Vec& x) {
    const RouterConfig& cfg = m.cfg;
    TokenTrace t;
    Vec z;
    if (m.is_linear()) {
        z = linear_logits(x, std::get<LinearRouterWeights>(m.router));
    } else {
        const auto& st = std::get<LatentRouterState>(m.router);
        if (cfg.norm_style == NormStyle::RMSNORM_INPUT) {
            double ms = 0.0;
            for (double v : x) ms += v * v;
            t.rms = std::sqrt(ms / static_cast<double>(x.size()) + kRmsEps);
            t.x_n.resize(x.size());
            for (std::size_t j = 0; j < x.size(); ++j)
                t.x_n[j] = x[j] * st.proj.rms_gain[j] / t.rms;
        } else {
            t.x_n = x;
        }
        t.q = vecmat(t.x_n, st.proj.w_q);
        t.rho = norm2(t.q);
        if (cfg.norm_style == NormStyle::RUNNING_SCALAR_NORM) {
            t.norm_hat = st.norm.standardize(t.rho);
            t.slope = st.norm.slope();
        } else {
            t.norm_hat = t.rho;
            t.slope = 1.0;
        }
        t.anchor_logits.assign(cfg.n_experts, std::vector<double>(cfg.n_anchors, 0.0));
        z.assign(cfg.n_experts, 0.0);
        for (std::size_t i = 0; i < cfg.n_experts; ++i) {
            for (std::size_t h = 0; h < cfg.n_anchors; ++h)
                t.anchor_logits[i][h] =
                    anchor_logit(cfg.mode, t.q, st.anchors.anchors[i][h], t.norm_hat, cfg);
            z[i] = logsumexp(t.anchor_logits[i]);
        }
    }
    t.decision = make_decision(z, cfg.tau, cfg.top_k);
    t.y = moe_forward(x, m.bank, t.decision);
    t.pred = matvec(m.head_w, t.y);
    for (std::size_t c = 0; c < t.pred.size(); ++c) t.pred[c] += m.head_b[c];
    return t;
}

// Per-anchor gradient with eps-floor handling: below the query floor the
// radial term is dropped (the clamped cosine is linear in q there).
inline GradPair anchor_grad(ScoreMode mode, const Vec& q, const Vec& k, double norm_hat,
                            double slope, const RouterConfig& cfg) {
    const double rho = norm2(q);
    const double kappa = norm2(k);
    const std::size_t r = q.size();
    GradPair g;
    g.grad_q.assign(r, 0.0);
    g.grad_k.assign(r, 0.0);
    if (mode == ScoreMode::L2R_DOT) {
        g.grad_q = k;
        g.grad_k = q;
        return g;
    }
    const double rho_c = std::max(rho, cfg.eps_q);
    const double kappa_c = std::max(kappa, cfg.eps_k);
    const double c = dot(q, k) / (rho_c * kappa_c);
    const bool q_floored = rho < cfg.eps_q;
    const bool k_floored = kappa < cfg.eps_k;
    // gradients of the clamped cosine
    Vec dc_dq(r), dc_dk(r);
    for (std::size_t i = 0; i < r; ++i) {
        const double u = rho > 0.0 ? q[i] / rho : 0.0;
        const double v = kappa > 0.0 ? k[i] / kappa : 0.0;
        dc_dq[i] = q_floored ? k[i] / (rho_c * kappa_c) : (k[i] / kappa_c - c * u) / rho;
        dc_dk[i] = k_floored ? q[i] / (rho_c * kappa_c) : (q[i] / rho_c - c * v) / kappa;
    }
    if (mode == ScoreMode::XMOE_COSINE || mode == ScoreMode::L2R_COSINE) {
        g.grad_q = dc_dq;
        g.grad_k = dc_dk;
        return g;
    }
    // SIPS
    const double ph = phi(norm_hat, cfg.gamma, cfg.beta);
    const double ph_d = phi_prime(norm_hat, cfg.gamma, cfg.beta) * slope;
    const double ps = psi(kappa, cfg.p);
    const double ps_d = 1.0 / cfg.p;
    for (std::size_t i = 0; i < r; ++i) {
        const double u = rho > 0.0 ? q[i] / rho : 0.0;
        const double v = kappa > 0.0 ? k[i] / kappa : 0.0;
        const double radial = q_floored ? 0.0 : ph_d * c * u;
        g.grad_q[i] = ps * (radial + ph * dc_dq[i]);
        g.grad_k[i] = ph * (ps_d * c * v + ps * dc_dk[i]);
    }
    return g;
}

}  // namespace detail

struct BatchResult {
    LossBreakdown loss;
    std::vector<RoutingDecision> decisions;
    bool finite = true;
};

/// Forward pass over a batch; no mutation.
inline BatchResult model_forward(const ToyMoEModel& m, const std::vector<Sample>& batch,
                                 double lambda_bal, double lambda_z) {
    if (batch.empty()) throw std::invalid_argument("model_forward: empty batch");
    BatchResult res;
    res.decisions.reserve(batch.size());
    double task = 0.0;
    for (const Sample& s : batch) {
        detail::TokenTrace t = detail::trace_token(m, s.x);
        task += task_loss_ce(t.pred, s.label);
        res.decisions.push_back(std::move(t.decision));
    }
    task /= static_cast<double>(batch.size());
    BatchRoutingStats stats = accumulate_stats(res.decisions, m.cfg.n_experts);
    res.loss = total_loss(task, stats, stats.logits, lambda_bal, lambda_z);
    res.finite = std::isfinite(res.loss.total);
    return res;
}

/// Gradients of LossBreakdown.total for every parameter group, batch-mean
/// reduction, accumulated in fixed token order.
inline std::pair<ModelGrads, LossBreakdown> backward_toy_model(const ToyMoEModel& m,
                                                               const std::vector<Sample>& batch,
                                                               double lambda_bal, double lambda_z) {
    if (batch.empty()) throw std::invalid_argument("backward_toy_model: empty batch");
    const RouterConfig& cfg = m.cfg;
    const std::size_t T = batch.size();
    const double inv_t = 1.0 / static_cast<double>(T);

    std::vector<detail::TokenTrace> traces;
    traces.reserve(T);
    std::vector<RoutingDecision> decisions;
    decisions.reserve(T);
    double task = 0.0;
    for (const Sample& s : batch) {
        traces.push_back(detail::trace_token(m, s.x));
        task += task_loss_ce(traces.back().pred, s.label);
        decisions.push_back(traces.back().decision);
    }
    task *= inv_t;
    BatchRoutingStats stats = accumulate_stats(decisions, cfg.n_experts);
    LossBreakdown loss = total_loss(task, stats, stats.logits, lambda_bal, lambda_z);

    ModelGrads g = ModelGrads::zeros_like(m);
    const auto* lat = std::get_if<LatentRouterState>(&m.router);

    for (std::size_t ti = 0; ti < T; ++ti) {
        const detail::TokenTrace& t = traces[ti];
        const Sample& s = batch[ti];
        const std::size_t d = cfg.d;

        // task head
        Vec dpred = softmax_temp(t.pred, 1.0);
        dpred[s.label] -= 1.0;
        for (double& v : dpred) v *= inv_t;
        Vec dy(d, 0.0);
        for (std::size_t c = 0; c < m.n_classes; ++c) {
            const double dp = dpred[c];
            g.head_b[c] += dp;
            for (std::size_t j = 0; j < d; ++j) {
                g.head_w.at(c, j) += dp * t.y[j];
                dy[j] += m.head_w.at(c, j) * dp;
            }
        }

        // mixture: selected gates and expert parameters
        Vec ds(cfg.n_experts, 0.0);
        for (std::size_t j = 0; j < t.decision.selected.size(); ++j) {
            const std::size_t ei = t.decision.selected[j];
            const double gate = t.decision.gate_weights[j];
            const AffineExpert& e = m.bank.experts[ei];
            Vec ex = e(s.x);
            ds[ei] += dot(dy, ex);
            Mat& gw = g.expert_w[ei];
            Vec& gb = g.expert_b[ei];
            for (std::size_t a = 0; a < d; ++a) {
                const double da = gate * dy[a];
                gb[a] += da;
                for (std::size_t b = 0; b < d; ++b) gw.at(a, b) += da * s.x[b];
            }
        }

        // load-balance: dL/ds_{t,i} = lambda_bal * N * f_i / T
        const double lb_scale = lambda_bal * static_cast<double>(cfg.n_experts) * inv_t;
        for (std::size_t i = 0; i < cfg.n_experts; ++i) ds[i] += lb_scale * stats.f[i];

        // softmax with temperature
        const Vec& sc = t.decision.scores;
        double mix = 0.0;
        for (std::size_t i = 0; i < cfg.n_experts; ++i) mix += ds[i] * sc[i];
        Vec dz(cfg.n_experts);
        for (std::size_t i = 0; i < cfg.n_experts; ++i)
            dz[i] = sc[i] * (ds[i] - mix) / cfg.tau;

        // z-loss on raw logits
        if (lambda_z != 0.0) {
            const double lse = logsumexp(t.decision.logits);
            const double zs = lambda_z * 2.0 * inv_t * lse;
            for (std::size_t i = 0; i < cfg.n_experts; ++i)
                dz[i] += zs * std::exp(t.decision.logits[i] - lse);
        }

        if (m.is_linear()) {
            Mat& gwg = g.w_g;
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t i = 0; i < cfg.n_experts; ++i)
                    gwg.at(a, i) += s.x[a] * dz[i];
            continue;
        }

        // latent router: LSE pooling -> scorer -> projection
        Vec dq(cfg.r, 0.0);
        for (std::size_t i = 0; i < cfg.n_experts; ++i) {
            if (dz[i] == 0.0) continue;
            const double zi = t.decision.logits[i];
            for (std::size_t h = 0; h < cfg.n_anchors; ++h) {
                const double da = dz[i] * std::exp(t.anchor_logits[i][h] - zi);
                GradPair gp = detail::anchor_grad(cfg.mode, t.q, lat->anchors.anchors[i][h],
                                                  t.norm_hat, t.slope, cfg);
                for (std::size_t b = 0; b < cfg.r; ++b) dq[b] += da * gp.grad_q[b];
                Vec& ga = g.anchors[i][h];
                for (std::size_t b = 0; b < cfg.r; ++b) ga[b] += da * gp.grad_k[b];
            }
        }
        Vec dxn(d, 0.0);
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = t.x_n[a];
            double acc = 0.0;
            for (std::size_t b = 0; b < cfg.r; ++b) {
                g.w_q.at(a, b) += xa * dq[b];
                acc += lat->proj.w_q.at(a, b) * dq[b];
            }
            dxn[a] = acc;
        }
        if (cfg.norm_style == NormStyle::RMSNORM_INPUT)
            for (std::size_t a = 0; a < d; ++a) g.rms_gain[a] += dxn[a] * s.x[a] / t.rms;
    }
    return {std::move(g), loss};
}

/// Visits every trainable scalar alongside its slot in a ModelGrads of the
/// same shape: fn(group_name, parameter_ref, grad_ref). Used by the
/// finite-difference checks.
template <typename F>
void for_each_param(ToyMoEModel& m, ModelGrads& g, F&& fn) {
    if (m.is_linear()) {
        auto& w = std::get<LinearRouterWeights>(m.router);
        for (std::size_t i = 0; i < w.w_g.data.size(); ++i) fn("w_g", w.w_g.data[i], g.w_g.data[i]);
    } else {
        auto& st = std::get<LatentRouterState>(m.router);
        for (std::size_t i = 0; i < st.proj.w_q.data.size(); ++i)
            fn("w_q", st.proj.w_q.data[i], g.w_q.data[i]);
        if (m.cfg.norm_style == NormStyle::RMSNORM_INPUT)
            for (std::size_t i = 0; i < st.proj.rms_gain.size(); ++i)
                fn("rms_gain", st.proj.rms_gain[i], g.rms_gain[i]);
        for (std::size_t i = 0; i < st.anchors.anchors.size(); ++i)
            for (std::size_t h = 0; h < st.anchors.anchors[i].size(); ++h)
                for (std::size_t b = 0; b < st.anchors.anchors[i][h].size(); ++b)
                    fn("anchors", st.anchors.anchors[i][h][b], g.anchors[i][h][b]);
    }
    for (std::size_t e = 0; e < m.bank.size(); ++e) {
        for (std::size_t i = 0; i < m.bank.experts[e].w.data.size(); ++i)
            fn("expert_w", m.bank.experts[e].w.data[i], g.expert_w[e].data[i]);
        for (std::size_t i = 0; i < m.bank.experts[e].b.size(); ++i)
            fn("expert_b", m.bank.experts[e].b[i], g.expert_b[e][i]);
    }
    for (std::size_t i = 0; i < m.head_w.data.size(); ++i)
        fn("head_w", m.head_w.data[i], g.head_w.data[i]);
    for (std::size_t i = 0; i < m.head_b.size(); ++i) fn("head_b", m.head_b[i], g.head_b[i]);
}

struct SgdScales {
    double router = 1.0;
    double anchor = 1.0;  // multiplies the router scale for anchors
    double expert = 1.0;
    double head = 1.0;
};

inline void sgd_step(ToyMoEModel& m, const ModelGrads& g, double lr,
                     const SgdScales& scales = {}) {
    auto apply = [](Vec& p, const Vec& gr, double step) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= step * gr[i];
    };
    if (m.is_linear()) {
        auto& w = std::get<LinearRouterWeights>(m.router);
        apply(w.w_g.data, g.w_g.data, lr * scales.router);
    } else {
        auto& st = std::get<LatentRouterState>(m.router);
        apply(st.proj.w_q.data, g.w_q.data, lr * scales.router);
        if (m.cfg.norm_style == NormStyle::RMSNORM_INPUT)
            apply(st.proj.rms_gain, g.rms_gain, lr * scales.router);
        const double astep = lr * scales.router * scales.anchor;
        for (std::size_t i = 0; i < st.anchors.anchors.size(); ++i)
            for (std::size_t h = 0; h < st.anchors.anchors[i].size(); ++h)
                apply(st.anchors.anchors[i][h], g.anchors[i][h], astep);
    }
    for (std::size_t i = 0; i < m.bank.size(); ++i) {
        apply(m.bank.experts[i].w.data, g.expert_w[i].data, lr * scales.expert);
        apply(m.bank.experts[i].b, g.expert_b[i], lr * scales.expert);
    }
    apply(m.head_w.data, g.head_w.data, lr * scales.head);
    apply(m.head_b, g.head_b, lr * scales.head);
}

}  // namespace l2r
