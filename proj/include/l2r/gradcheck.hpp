#pragma once

// Finite-difference verification of the analytic gradients: the three
// scorers on random instances with norms in [0.1, 10], and the full toy
// model with central differences on every parameter.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "l2r/calculus.hpp"
#include "l2r/model.hpp"

namespace l2r {

struct GradCheckRow {
    std::string component;
    std::size_t instances = 0;  // random instances (scorers) or parameter probes (model)
    double max_rel_err = 0.0;
    double tolerance = 0.0;

    bool pass() const { return max_rel_err < tolerance; }
};

namespace gradcheck_detail {

// Norm-level relative error with a 1e-3 absolute floor: at stationary
// instances (q nearly parallel to k) the exact gradient vanishes and central
// differences cannot resolve below their ~1e-10 noise floor, so sub-floor
// gradients are judged on absolute error instead.
inline double norm_rel_err(const Vec& a, const Vec& b) {
    double dn = 0.0, an = 0.0, bn = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dn += (a[i] - b[i]) * (a[i] - b[i]);
        an += a[i] * a[i];
        bn += b[i] * b[i];
    }
    return std::sqrt(dn) / std::max({std::sqrt(an), std::sqrt(bn), 1e-3});
}

inline Vec fd_grad(const std::function<double(const Vec&)>& f, Vec x) {
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = central_diff(f, x, i);
    return out;
}

inline Vec scaled_direction(Rng& rng, std::size_t r, double lo, double hi) {
    Vec v = sample_unit_sphere(rng, r);
    const double n = rng.uniform(lo, hi);
    for (double& x : v) x *= n;
    return v;
}

}  // namespace gradcheck_detail

inline GradCheckRow gradcheck_cosine(Rng& rng, std::size_t n, const RouterConfig& cfg) {
    using namespace gradcheck_detail;
    GradCheckRow row{"cosine", n, 0.0, 1e-5};
    for (std::size_t t = 0; t < n; ++t) {
        Vec q = scaled_direction(rng, cfg.r, 0.1, 10.0);
        Vec k = scaled_direction(rng, cfg.r, 0.1, 10.0);
        GradPair g = grad_cosine(q, k, cfg);
        Vec fq = fd_grad([&](const Vec& qq) { return cosine_logit(qq, k, cfg); }, q);
        Vec fk = fd_grad([&](const Vec& kk) { return cosine_logit(q, kk, cfg); }, k);
        row.max_rel_err =
            std::max({row.max_rel_err, norm_rel_err(g.grad_q, fq), norm_rel_err(g.grad_k, fk)});
    }
    return row;
}

inline GradCheckRow gradcheck_sips(Rng& rng, std::size_t n, const RouterConfig& cfg) {
    using namespace gradcheck_detail;
    GradCheckRow row{"sips", n, 0.0, 1e-5};
    for (std::size_t t = 0; t < n; ++t) {
        Vec q = scaled_direction(rng, cfg.r, 0.1, 10.0);
        Vec k = scaled_direction(rng, cfg.r, 0.1, 10.0);
        GradPair g = grad_sips(q, k, norm2(q), 1.0, cfg);
        Vec fq = fd_grad([&](const Vec& qq) { return sips_logit(qq, k, norm2(qq), cfg); }, q);
        Vec fk = fd_grad([&](const Vec& kk) { return sips_logit(q, kk, norm2(q), cfg); }, k);
        row.max_rel_err =
            std::max({row.max_rel_err, norm_rel_err(g.grad_q, fq), norm_rel_err(g.grad_k, fk)});
    }
    return row;
}

inline GradCheckRow gradcheck_multi_anchor(Rng& rng, std::size_t n, const RouterConfig& cfg,
                                           std::size_t h = 4) {
    using namespace gradcheck_detail;
    GradCheckRow row{"multi_anchor_sips", n, 0.0, 1e-5};
    for (std::size_t t = 0; t < n; ++t) {
        Vec q = scaled_direction(rng, cfg.r, 0.1, 10.0);
        std::vector<Vec> anchors;
        for (std::size_t j = 0; j < h; ++j) anchors.push_back(scaled_direction(rng, cfg.r, 0.1, 10.0));
        MultiAnchorGrad g = grad_multi_anchor_sips(q, anchors, norm2(q), 1.0, cfg);
        auto pooled = [&](const Vec& qq) {
            std::vector<double> z;
            for (const Vec& a : anchors) z.push_back(sips_logit(qq, a, norm2(qq), cfg));
            return logsumexp(z);
        };
        auto pooled_fixed_q = [&](const Vec&) {
            std::vector<double> z;
            for (const Vec& a : anchors) z.push_back(sips_logit(q, a, norm2(q), cfg));
            return logsumexp(z);
        };
        // one gradient object over (q, all anchors): low-weight anchors carry
        // tiny exact gradients that sit below finite-difference resolution on
        // their own, so the comparison is at the full-gradient level
        Vec analytic = g.grad_q;
        Vec numeric = fd_grad(pooled, q);
        for (std::size_t j = 0; j < h; ++j) {
            for (std::size_t i = 0; i < cfg.r; ++i) {
                analytic.push_back(g.grad_anchors[j][i]);
                numeric.push_back(central_diff(pooled_fixed_q, anchors[j], i));
            }
        }
        row.max_rel_err = std::max(row.max_rel_err, norm_rel_err(analytic, numeric));
    }
    return row;
}

/// Central differences on every parameter of a small random toy model,
/// repeated over independent (model, batch) instances. Instances whose
/// top-k selection margin is below 1e-3 are resampled so the probes cannot
/// flip a selection.
inline GradCheckRow gradcheck_toy_model(Rng& base, std::size_t n_instances,
                                        double lambda_bal = 0.01, double lambda_z = 0.001) {
    GradCheckRow row{"toy_model", 0, 0.0, 1e-4};
    RouterConfig cfg;
    cfg.d = 8;
    cfg.r = 2;
    cfg.n_experts = 4;
    cfg.n_anchors = 2;
    cfg.top_k = 2;
    cfg.mode = ScoreMode::L2R_SIPS;
    cfg.norm_style = NormStyle::RMSNORM_INPUT;
    const double h = 1e-6;
    for (std::size_t inst = 0; inst < n_instances; ++inst) {
        Rng rng = base.split("gradcheck/model/" + std::to_string(inst));
        ToyMoEModel m = init_toy_model(cfg, 4, rng);
        for (auto& e : m.bank.experts) {
            for (double& v : e.w.data) v = 0.3 * rng.normal();
            for (double& v : e.b) v = 0.3 * rng.normal();
        }
        for (double& v : m.head_w.data) v = 0.5 * rng.normal();
        std::vector<Sample> batch(16);
        bool safe = false;
        for (int attempt = 0; attempt < 30 && !safe; ++attempt) {
            for (Sample& s : batch) {
                s.x.resize(cfg.d);
                for (double& v : s.x) v = rng.normal();
                s.label = rng.below(4);
            }
            double margin = 1e300;
            for (const Sample& s : batch) {
                RoutingDecision d =
                    make_decision(route_logits(s.x, m.router, cfg), cfg.tau, cfg.top_k);
                Vec sorted = d.scores;
                std::sort(sorted.begin(), sorted.end(), std::greater<>());
                margin = std::min(margin, sorted[cfg.top_k - 1] - sorted[cfg.top_k]);
            }
            safe = margin >= 1e-3;
        }
        if (!safe) continue;
        auto [grads, loss] = backward_toy_model(m, batch, lambda_bal, lambda_z);
        (void)loss;
        for_each_param(m, grads, [&](const char*, double& p, double& g) {
            const double p0 = p;
            p = p0 + h;
            const double fp = model_forward(m, batch, lambda_bal, lambda_z).loss.total;
            p = p0 - h;
            const double fm = model_forward(m, batch, lambda_bal, lambda_z).loss.total;
            p = p0;
            const double fd = (fp - fm) / (2.0 * h);
            const double rel = std::fabs(g - fd) / std::max({std::fabs(g), std::fabs(fd), 1e-3});
            row.max_rel_err = std::max(row.max_rel_err, rel);
            ++row.instances;
        });
    }
    return row;
}

}  // namespace l2r
