#pragma once

// Hand-derived gradients of the scoring geometries, pointwise gradient
// bounds and closed-form Lipschitz constants on a norm-bounded domain, plus
// the empirical verifier that samples the domain and checks dominance.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "l2r/core.hpp"
#include "l2r/routing.hpp"

namespace l2r {

struct GradPair {
    Vec grad_q;
    Vec grad_k;
};

/// Gradients of cos(theta) = q.k / (||q|| ||k||):
///   grad_q = (I - u u^T) v / rho,   grad_k = (I - v v^T) u / kappa.
/// Norms must be at or above the configured floors; callers clamp.
inline GradPair grad_cosine(const Vec& q, const Vec& k, const RouterConfig& cfg) {
    const double rho = norm2(q);
    const double kappa = norm2(k);
    if (rho < cfg.eps_q || kappa < cfg.eps_k)
        throw std::invalid_argument("grad_cosine: norms below eps floors");
    const std::size_t r = q.size();
    if (k.size() != r) throw std::invalid_argument("grad_cosine: dimension mismatch");
    GradPair g;
    g.grad_q.resize(r);
    g.grad_k.resize(r);
    const double c = dot(q, k) / (rho * kappa);
    for (std::size_t i = 0; i < r; ++i) {
        const double u = q[i] / rho;
        const double v = k[i] / kappa;
        g.grad_q[i] = (v - c * u) / rho;
        g.grad_k[i] = (u - c * v) / kappa;
    }
    return g;
}

/// Gradients of z = phi(norm_hat(rho)) * psi(kappa) * cos(theta):
///   grad_q = psi(kappa) * (phi'(rho) c u + phi(rho) grad_q cos)
///   grad_k = phi(rho)   * (psi'(kappa) c v + psi(kappa) grad_k cos)
/// where phi'(rho) includes the chain factor d norm_hat / d rho.
inline GradPair grad_sips(const Vec& q, const Vec& k, double norm_hat, double d_normhat_d_rho,
                          const RouterConfig& cfg) {
    const double rho = norm2(q);
    const double kappa = norm2(k);
    if (rho < cfg.eps_q || kappa < cfg.eps_k)
        throw std::invalid_argument("grad_sips: norms below eps floors");
    const std::size_t r = q.size();
    const double c = dot(q, k) / (rho * kappa);
    const double ph = phi(norm_hat, cfg.gamma, cfg.beta);
    const double ph_d = phi_prime(norm_hat, cfg.gamma, cfg.beta) * d_normhat_d_rho;
    const double ps = psi(kappa, cfg.p);
    const double ps_d = 1.0 / cfg.p;
    GradPair g;
    g.grad_q.resize(r);
    g.grad_k.resize(r);
    for (std::size_t i = 0; i < r; ++i) {
        const double u = q[i] / rho;
        const double v = k[i] / kappa;
        const double dc_dq = (v - c * u) / rho;
        const double dc_dk = (u - c * v) / kappa;
        g.grad_q[i] = ps * (ph_d * c * u + ph * dc_dq);
        g.grad_k[i] = ph * (ps_d * c * v + ps * dc_dk);
    }
    return g;
}

/// Gradient of the LSE-pooled multi-anchor SIPS logit: the pool weights are
/// the softmax of the per-anchor logits, and the pooled gradient is their
/// weighted combination.
struct MultiAnchorGrad {
    Vec grad_q;
    std::vector<Vec> grad_anchors;  // one per anchor
    std::vector<double> pool_weights;
};

inline MultiAnchorGrad grad_multi_anchor_sips(const Vec& q, const std::vector<Vec>& anchors_i,
                                              double norm_hat, double d_normhat_d_rho,
                                              const RouterConfig& cfg) {
    if (anchors_i.empty()) throw std::invalid_argument("grad_multi_anchor_sips: H must be >= 1");
    const std::size_t h = anchors_i.size();
    std::vector<double> z(h);
    for (std::size_t j = 0; j < h; ++j) z[j] = sips_logit(q, anchors_i[j], norm_hat, cfg);
    const double pooled = logsumexp(z);

    MultiAnchorGrad g;
    g.grad_q.assign(q.size(), 0.0);
    g.grad_anchors.resize(h);
    g.pool_weights.resize(h);
    for (std::size_t j = 0; j < h; ++j) {
        const double w = std::exp(z[j] - pooled);
        g.pool_weights[j] = w;
        GradPair gp = grad_sips(q, anchors_i[j], norm_hat, d_normhat_d_rho, cfg);
        for (std::size_t i = 0; i < q.size(); ++i) g.grad_q[i] += w * gp.grad_q[i];
        g.grad_anchors[j] = gp.grad_k;
        for (double& v : g.grad_anchors[j]) v *= w;
    }
    return g;
}

/// Pointwise upper bounds at (rho, kappa):
///   ||grad_q z|| <= psi(kappa) * (|phi'(rho)| + phi(rho)/rho)
///   ||grad_k z|| <= phi(rho)   * (|psi'|      + psi(kappa)/kappa)
/// norm_hat and its slope must correspond to the normalization in effect.
inline std::pair<double, double> grad_bound_radial(double rho, double kappa, double norm_hat,
                                                   double d_normhat_d_rho,
                                                   const RouterConfig& cfg) {
    const double ph = phi(norm_hat, cfg.gamma, cfg.beta);
    const double ph_d = std::fabs(phi_prime(norm_hat, cfg.gamma, cfg.beta) * d_normhat_d_rho);
    const double ps = psi(kappa, cfg.p);
    const double bound_q = ps * (ph_d + ph / rho);
    const double bound_k = ph * (1.0 / cfg.p + ps / kappa);
    return {bound_q, bound_k};
}

/// Norm-bounded analysis domain. l_norm is the Lipschitz constant of the
/// scalar normalization map rho -> norm_hat (1 for the identity styles).
struct LipschitzDomain {
    double rho_min = 1e-6;
    double rho_max = 10.0;
    double kappa_min = 1e-6;
    double kappa_max = 2.0;
    double l_norm = 1.0;

    void validate() const {
        if (!(rho_min > 0.0) || rho_min > rho_max)
            throw std::invalid_argument("LipschitzDomain: need 0 < rho_min <= rho_max");
        if (!(kappa_min > 0.0) || kappa_min > kappa_max)
            throw std::invalid_argument("LipschitzDomain: need 0 < kappa_min <= kappa_max");
    }
};

struct BoundReport {
    double lip_q = 0.0;
    double lip_k = 0.0;
    std::size_t samples_checked = 0;
    double max_observed_grad_q = 0.0;
    double max_observed_grad_k = 0.0;
    std::size_t violations = 0;
    double l_norm = 1.0;
};

/// Closed-form constants:
///   Lip_q <= psi_max * (L_phi + phi_max / rho_min)
///   Lip_k <= phi_max * (L_psi + psi_max / kappa_min)
/// with phi_max = gamma(1+beta), L_phi = gamma*beta*l_norm, L_psi = 1/p and
/// psi_max = 1 + (kappa_max - 1)/p.
inline BoundReport lipschitz_constants(const LipschitzDomain& domain, const RouterConfig& cfg) {
    domain.validate();
    const double phi_max = cfg.gamma * (1.0 + cfg.beta);
    const double l_phi = cfg.gamma * cfg.beta * domain.l_norm;
    const double psi_max = psi(domain.kappa_max, cfg.p);
    const double l_psi = 1.0 / cfg.p;
    BoundReport rep;
    rep.lip_q = psi_max * (l_phi + phi_max / domain.rho_min);
    rep.lip_k = phi_max * (l_psi + psi_max / domain.kappa_min);
    rep.l_norm = domain.l_norm;
    return rep;
}

/// Samples (q, k) with norms uniform over the domain and isotropic
/// directions, then checks gradient norm <= pointwise bound <= constant.
/// For the dot-product contrast (cfg.mode == L2R_DOT) no bounds apply; the
/// report carries the observed maxima, which grow with the norm caps.
inline BoundReport verify_bounds(const LipschitzDomain& domain, const RouterConfig& cfg,
                                 std::size_t n_samples, Rng& rng, std::size_t dim = 0) {
    domain.validate();
    if (n_samples < 1) throw std::invalid_argument("verify_bounds: n_samples must be >= 1");
    const std::size_t r = dim ? dim : cfg.r;
    BoundReport rep = lipschitz_constants(domain, cfg);
    rep.samples_checked = n_samples;

    const bool dot_mode = cfg.mode == ScoreMode::L2R_DOT;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const double rho = rng.uniform(domain.rho_min, domain.rho_max);
        const double kappa = rng.uniform(domain.kappa_min, domain.kappa_max);
        Vec q = sample_unit_sphere(rng, r);
        Vec k = sample_unit_sphere(rng, r);
        for (double& v : q) v *= rho;
        for (double& v : k) v *= kappa;

        double gq, gk;
        if (dot_mode) {
            gq = norm2(k);  // grad_q (q.k) = k
            gk = norm2(q);
        } else {
            const double norm_hat = rho * domain.l_norm;  // linear map through the slope
            GradPair g = grad_sips(q, k, norm_hat, domain.l_norm, cfg);
            gq = norm2(g.grad_q);
            gk = norm2(g.grad_k);
            auto [bq, bk] = grad_bound_radial(rho, kappa, norm_hat, domain.l_norm, cfg);
            const double slack = 1e-12;
            if (gq > bq * (1.0 + slack) + slack) ++rep.violations;
            if (gk > bk * (1.0 + slack) + slack) ++rep.violations;
            if (bq > rep.lip_q * (1.0 + slack) + slack) ++rep.violations;
            if (bk > rep.lip_k * (1.0 + slack) + slack) ++rep.violations;
        }
        rep.max_observed_grad_q = std::max(rep.max_observed_grad_q, gq);
        rep.max_observed_grad_k = std::max(rep.max_observed_grad_k, gk);
    }
    return rep;
}

/// Central finite difference of a scalar function along one coordinate.
template <typename F>
double central_diff(F&& f, Vec& x, std::size_t i, double h = 1e-6) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    return (fp - fm) / (2.0 * h);
}

}  // namespace l2r
