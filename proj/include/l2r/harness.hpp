#pragma once

// Synthetic cluster data and the from-scratch toy training loop: plain SGD
// on task CE + load-balance + z-loss, deterministic for a given seed.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "l2r/core.hpp"
#include "l2r/diagnostics.hpp"
#include "l2r/losses.hpp"
#include "l2r/model.hpp"

namespace l2r {

struct SyntheticDataset {
    std::vector<Sample> samples;
    std::size_t n_clusters = 0;
    std::vector<Vec> cluster_means;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

/// Cluster means on the radius-3 sphere, points = mean + N(0, sigma^2) noise,
/// label = cluster id. Bitwise reproducible from the seed.
inline SyntheticDataset make_dataset(std::uint64_t seed, std::size_t n_clusters, std::size_t d,
                                     std::size_t n_per_cluster, double noise_sigma) {
    if (n_clusters < 2) throw std::invalid_argument("make_dataset: need >= 2 clusters");
    if (d < 2) throw std::invalid_argument("make_dataset: need d >= 2");
    SyntheticDataset ds;
    ds.n_clusters = n_clusters;
    ds.noise_sigma = noise_sigma;
    ds.seed = seed;
    Rng base(seed);
    Rng rm = base.split("data/means");
    Rng rn = base.split("data/noise");
    ds.cluster_means.reserve(n_clusters);
    for (std::size_t c = 0; c < n_clusters; ++c) {
        Vec m = sample_unit_sphere(rm, d);
        for (double& v : m) v *= 3.0;
        ds.cluster_means.push_back(std::move(m));
    }
    ds.samples.reserve(n_clusters * n_per_cluster);
    for (std::size_t c = 0; c < n_clusters; ++c)
        for (std::size_t s = 0; s < n_per_cluster; ++s) {
            Sample sm;
            sm.label = c;
            sm.x = ds.cluster_means[c];
            for (double& v : sm.x) v += noise_sigma * rn.normal();
            ds.samples.push_back(std::move(sm));
        }
    return ds;
}

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch_size = 64;
    double lr = 0.05;
    double lambda_bal = 0.01;
    double lambda_z = 0.001;
    std::size_t snapshot_interval = 200;
    std::uint64_t seed = 2025;
    double router_lr_scale = 1.0;
    double anchor_lr_scale = 1.0;
    double expert_lr_scale = 1.0;

    /// LLM-style objective: both auxiliaries on.
    static TrainConfig llm_preset() { return TrainConfig{}; }
    /// Vision-style objective: z-loss omitted.
    static TrainConfig vision_preset() {
        TrainConfig t;
        t.lambda_z = 0.0;
        return t;
    }
};

struct TrainRun {
    RouterConfig router_cfg;
    TrainConfig train_cfg;
    std::vector<LossBreakdown> history;  // one entry per step
    std::vector<std::pair<std::size_t, UsageStats>> snapshots;
    ConcentrationReport final_concentration;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    bool diverged = false;
    double ce_initial = 0.0, ce_final = 0.0;
    double lbal_initial = 0.0, lbal_final = 0.0;
    double entropy_top1 = 0.0, entropy_importance = 0.0;
    double max_anchor_norm = 0.0;
    ToyMoEModel model;
};

namespace detail {

struct DatasetEval {
    double ce = 0.0;
    double lbal = 0.0;
    std::vector<RoutingDecision> decisions;
    std::vector<Vec> queries;  // q for latent modes, x for linear
};

inline DatasetEval eval_dataset(const ToyMoEModel& m, const SyntheticDataset& ds) {
    DatasetEval ev;
    ev.decisions.reserve(ds.samples.size());
    ev.queries.reserve(ds.samples.size());
    double ce = 0.0;
    for (const Sample& s : ds.samples) {
        TokenTrace t = trace_token(m, s.x);
        ce += task_loss_ce(t.pred, s.label);
        ev.queries.push_back(m.is_linear() ? s.x : t.q);
        ev.decisions.push_back(std::move(t.decision));
    }
    ev.ce = ce / static_cast<double>(ds.samples.size());
    BatchRoutingStats st = accumulate_stats(ev.decisions, m.cfg.n_experts);
    ev.lbal = load_balance_loss(st, m.cfg.n_experts);
    return ev;
}

}  // namespace detail

/// SGD training; records the per-step batch loss breakdown and periodic
/// usage snapshots over the whole dataset. Halts with diverged=true on the
/// first non-finite loss, returning the partial history.
inline TrainRun train(const RouterConfig& rcfg, const TrainConfig& tcfg,
                      const SyntheticDataset& ds) {
    rcfg.validate();
    if (tcfg.batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
    if (ds.samples.empty()) throw std::invalid_argument("train: empty dataset");
    if (rcfg.d != ds.samples[0].x.size())
        throw std::invalid_argument("train: config d=" + std::to_string(rcfg.d) +
                                    " != data dimension " +
                                    std::to_string(ds.samples[0].x.size()));

    const auto t_start = std::chrono::steady_clock::now();
    TrainRun run;
    run.router_cfg = rcfg;
    run.train_cfg = tcfg;
    run.seed = tcfg.seed;

    Rng base(tcfg.seed);
    Rng init_rng = base.split("train/init");
    Rng batch_rng = base.split("train/batch");
    Rng pair_rng = base.split("train/pairs");
    run.model = init_toy_model(rcfg, ds.n_clusters, init_rng);

    {
        detail::DatasetEval ev0 = detail::eval_dataset(run.model, ds);
        run.ce_initial = ev0.ce;
        run.lbal_initial = ev0.lbal;
        UsageStats us0 = expert_usage(ev0.decisions, rcfg.n_experts);
        run.snapshots.emplace_back(0, std::move(us0));
    }

    SgdScales scales;
    scales.router = tcfg.router_lr_scale;
    scales.anchor = tcfg.anchor_lr_scale;
    scales.expert = tcfg.expert_lr_scale;

    std::vector<Sample> batch(tcfg.batch_size);
    run.history.reserve(tcfg.steps);
    for (std::size_t step = 0; step < tcfg.steps; ++step) {
        for (std::size_t b = 0; b < tcfg.batch_size; ++b)
            batch[b] = ds.samples[batch_rng.below(ds.samples.size())];
        auto [grads, loss] = backward_toy_model(run.model, batch, tcfg.lambda_bal, tcfg.lambda_z);
        run.history.push_back(loss);
        if (!std::isfinite(loss.total)) {
            run.diverged = true;
            break;
        }
        sgd_step(run.model, grads, tcfg.lr, scales);
        if (rcfg.norm_style == NormStyle::RUNNING_SCALAR_NORM) {
            auto& st = std::get<LatentRouterState>(run.model.router);
            Vec norms(batch.size());
            for (std::size_t b = 0; b < batch.size(); ++b)
                norms[b] = norm2(project_query(batch[b].x, st.proj, rcfg));
            st.norm.update(norms);
        }
        if (tcfg.snapshot_interval > 0 && (step + 1) % tcfg.snapshot_interval == 0) {
            detail::DatasetEval ev = detail::eval_dataset(run.model, ds);
            run.snapshots.emplace_back(step + 1, expert_usage(ev.decisions, rcfg.n_experts));
        }
    }

    detail::DatasetEval evf = detail::eval_dataset(run.model, ds);
    run.ce_final = evf.ce;
    run.lbal_final = evf.lbal;
    UsageStats usf = expert_usage(evf.decisions, rcfg.n_experts);
    auto [h1, hi] = usage_entropy(usf);
    run.entropy_top1 = h1;
    run.entropy_importance = hi;
    run.final_concentration = pairwise_cosine_variance(evf.queries, 1000000, pair_rng);
    if (!run.model.is_linear())
        run.max_anchor_norm = std::get<LatentRouterState>(run.model.router).anchors.max_norm();

    run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return run;
}

/// One comparison row per (mode, seed).
struct CompareRow {
    ScoreMode mode;
    std::uint64_t seed = 0;
    double ce_final = 0.0;
    double lbal_final = 0.0;
    double entropy_top1 = 0.0;
    double entropy_importance = 0.0;
    double concentration_variance = 0.0;
};

struct CompareTable {
    std::vector<CompareRow> rows;

    /// mean and half-range of a field across the seeds of one mode
    template <typename F>
    std::pair<double, double> aggregate(ScoreMode mode, F&& field) const {
        double lo = 0.0, hi = 0.0, sum = 0.0;
        std::size_t n = 0;
        for (const CompareRow& r : rows) {
            if (r.mode != mode) continue;
            const double v = field(r);
            if (n == 0) lo = hi = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
            ++n;
        }
        if (n == 0) throw std::invalid_argument("aggregate: mode has no rows");
        return {sum / static_cast<double>(n), (hi - lo) / 2.0};
    }
};

inline CompareTable compare_modes(const RouterConfig& base_cfg, const TrainConfig& base_tcfg,
                                  const SyntheticDataset& ds, const std::vector<ScoreMode>& modes,
                                  const std::vector<std::uint64_t>& seeds) {
    if (modes.empty() || seeds.empty())
        throw std::invalid_argument("compare_modes: need >= 1 mode and >= 1 seed");
    CompareTable table;
    table.rows.reserve(modes.size() * seeds.size());
    for (ScoreMode mode : modes) {
        RouterConfig cfg = base_cfg;
        cfg.mode = mode;
        if (mode == ScoreMode::XMOE_COSINE) cfg.n_anchors = 1;
        for (std::uint64_t seed : seeds) {
            TrainConfig tcfg = base_tcfg;
            tcfg.seed = seed;
            TrainRun run = train(cfg, tcfg, ds);
            CompareRow row;
            row.mode = mode;
            row.seed = seed;
            row.ce_final = run.ce_final;
            row.lbal_final = run.lbal_final;
            row.entropy_top1 = run.entropy_top1;
            row.entropy_importance = run.entropy_importance;
            row.concentration_variance = run.final_concentration.variance;
            table.rows.push_back(row);
        }
    }
    return table;
}

}  // namespace l2r
