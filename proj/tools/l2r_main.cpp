// l2r: diagnostics and toy-training CLI for the low-rank routing library.
//
// Every command reads a flat key=value config, writes tabular data files plus
// one manifest.json into --output-dir, and exits 0 iff all enabled checks
// pass. Data files are byte-identical across reruns with the same config and
// seed; wall-clock information lives only in the manifest.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "l2r/calculus.hpp"
#include "l2r/config.hpp"
#include "l2r/core.hpp"
#include "l2r/diagnostics.hpp"
#include "l2r/efficiency.hpp"
#include "l2r/gradcheck.hpp"
#include "l2r/harness.hpp"
#include "l2r/model.hpp"
#include "l2r/table.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace l2r;

namespace {

constexpr const char* kVersion = "1.0.0";

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct RunContext {
    std::string command;
    fs::path output_dir;
    KeyValueConfig config;
    std::uint64_t seed = 2025;
    TableFormat format = TableFormat::CSV;
    std::string config_hash;
    std::vector<std::string> outputs;
    std::vector<Check> checks;

    std::string ext() const { return format == TableFormat::CSV ? ".csv" : ".jsonl"; }

    TableWriter writer(const std::string& stem, std::vector<std::string> columns) {
        TableWriter w((output_dir / (stem + ext())).string(), format, std::move(columns));
        w.meta("config_hash", config_hash);
        w.meta("command", command);
        return w;
    }

    void emit(TableWriter& w, const std::string& stem) {
        w.write();
        outputs.push_back(stem + ext());
    }

    void check(const std::string& name, bool pass, const std::string& detail = "") {
        checks.push_back({name, pass, detail});
    }

    bool all_pass() const {
        for (const Check& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

std::uint64_t file_hash(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

void write_manifest(const RunContext& ctx) {
    json m;
    m["artifact_version"] = kVersion;
    m["command"] = ctx.command;
    m["seed"] = ctx.seed;
    m["config_hash"] = ctx.config_hash;
    m["resolved_config"] = json::object();
    for (const auto& [k, v] : ctx.config.values()) m["resolved_config"][k] = v;
    m["outputs"] = json::array();
    for (const std::string& f : ctx.outputs) {
        char hex[17];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(file_hash(ctx.output_dir / f)));
        m["outputs"].push_back({{"file", f}, {"fnv1a64", hex}});
    }
    m["checks"] = json::array();
    for (const Check& c : ctx.checks)
        m["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    m["pass"] = ctx.all_pass();
    m["written_unix_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::system_clock::now().time_since_epoch())
                               .count();
    std::ofstream out(ctx.output_dir / "manifest.json");
    out << m.dump(2) << "\n";
}

SyntheticDataset dataset_from(const KeyValueConfig& kv, const RouterConfig& rcfg) {
    const std::uint64_t seed = kv.get_u64("data.seed", 2025);
    const std::size_t n_clusters = kv.get_u64("data.n_clusters", 8);
    const std::size_t n_per = kv.get_u64("data.n_per_cluster", 64);
    const double sigma = kv.get_double("data.noise_sigma", 0.3);
    return make_dataset(seed, n_clusters, rcfg.d, n_per, sigma);
}

// ---------------------------------------------------------------- landscape

void cmd_landscape(RunContext& ctx) {
    RouterConfig base = router_config_from(ctx.config);
    if (base.r != 2) throw std::invalid_argument("landscape: router.r must be 2");
    const double ax = ctx.config.get_double("landscape.anchor_x", -2.0);
    const double ay = ctx.config.get_double("landscape.anchor_y", 0.0);
    const double xlo = ctx.config.get_double("landscape.x_lo", -3.0);
    const double xhi = ctx.config.get_double("landscape.x_hi", 3.0);
    const double ylo = ctx.config.get_double("landscape.y_lo", -3.0);
    const double yhi = ctx.config.get_double("landscape.y_hi", 3.0);
    const std::size_t res = ctx.config.get_u64("landscape.resolution", 121);
    const auto modes = ctx.config.get_string_list("landscape.modes", {"dot", "cosine", "sips"});
    std::vector<std::uint64_t> beta_mills =
        ctx.config.get_u64_list("landscape.sips_beta_milli", {0, 250, 1000});
    const Vec anchor{ax, ay};

    struct Spec {
        ScoreMode mode;
        double beta;
        std::string stem;
    };
    std::vector<Spec> specs;
    for (const std::string& m : modes) {
        if (m == "dot") specs.push_back({ScoreMode::L2R_DOT, base.beta, "landscape_dot"});
        else if (m == "cosine") specs.push_back({ScoreMode::L2R_COSINE, base.beta, "landscape_cosine"});
        else if (m == "sips") {
            for (std::uint64_t bm : beta_mills) {
                char stem[64];
                std::snprintf(stem, sizeof(stem), "landscape_sips_beta%.3f",
                              static_cast<double>(bm) / 1000.0);
                specs.push_back({ScoreMode::L2R_SIPS, static_cast<double>(bm) / 1000.0, stem});
            }
        } else {
            throw std::invalid_argument("landscape: unknown mode '" + m + "'");
        }
    }

    bool sips_bounded = true;
    for (const Spec& s : specs) {
        RouterConfig cfg = base;
        cfg.mode = s.mode;
        cfg.beta = s.beta;
        LandscapeGrid g = score_landscape(anchor, cfg, xlo, xhi, ylo, yhi, res);
        if (s.mode == ScoreMode::L2R_SIPS) {
            const double bound = cfg.gamma * (1.0 + cfg.beta) * psi(norm2(anchor), cfg.p);
            for (double v : g.values)
                if (std::fabs(v) > bound + 1e-12) sips_bounded = false;
        }
        TableWriter w = ctx.writer(s.stem, {"qx", "qy", "value"});
        w.meta("mode", to_string(s.mode));
        w.meta("beta", format_g17(s.beta));
        w.meta("anchor", format_g17(ax) + " " + format_g17(ay));
        w.meta("range", format_g17(xlo) + " " + format_g17(xhi) + " " + format_g17(ylo) + " " +
                             format_g17(yhi));
        w.meta("resolution", std::to_string(res));
        for (std::size_t iy = 0; iy < res; ++iy)
            for (std::size_t ix = 0; ix < res; ++ix)
                w.row({g.x_at(ix), g.y_at(iy), g.at(iy, ix)});
        ctx.emit(w, s.stem);
    }
    ctx.check("landscape.files_written", ctx.outputs.size() == specs.size(),
              std::to_string(ctx.outputs.size()) + " grids");
    ctx.check("landscape.sips_bounded", sips_bounded);
}

// ----------------------------------------------------------------- variance

void cmd_variance(RunContext& ctx) {
    const auto r_list = ctx.config.get_u64_list("variance.r_list", {2, 8, 32, 512});
    const std::size_t n_samples = ctx.config.get_u64("variance.n_samples", 10000);
    const std::size_t max_pairs = ctx.config.get_u64("variance.max_pairs", 1000000);

    Rng base(ctx.seed);
    TableWriter w = ctx.writer("variance",
                               {"r", "n_samples", "n_pairs", "variance", "isotropic_reference"});
    std::vector<double> variances;
    for (std::uint64_t r : r_list) {
        Rng gen = base.split("variance/samples/" + std::to_string(r));
        Rng pairs = base.split("variance/pairs/" + std::to_string(r));
        std::vector<Vec> vs;
        vs.reserve(n_samples);
        for (std::size_t i = 0; i < n_samples; ++i) vs.push_back(sample_unit_sphere(gen, r));
        ConcentrationReport rep = pairwise_cosine_variance(vs, max_pairs, pairs);
        variances.push_back(rep.variance);
        w.row({static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(n_samples),
               static_cast<std::uint64_t>(rep.n_pairs), rep.variance, rep.isotropic_reference});
    }
    ctx.emit(w, "variance");

    for (std::size_t i = 0; i < r_list.size(); ++i)
        if (r_list[i] == 2)
            ctx.check("variance.r2_isotropic_band", std::fabs(variances[i] - 0.5) <= 0.02,
                      "var=" + format_g17(variances[i]));
    bool decreasing = true;
    for (std::size_t i = 0; i + 1 < variances.size(); ++i)
        if (!(variances[i + 1] < variances[i])) decreasing = false;
    ctx.check("variance.strictly_decreasing", decreasing);
}

// ------------------------------------------------------------------- params

void cmd_params(RunContext& ctx) {
    const std::uint64_t d = ctx.config.get_u64("params.d", 2048);
    const std::uint64_t n = ctx.config.get_u64("params.n_experts", 64);
    const std::uint64_t layers = ctx.config.get_u64("params.layers", 16);
    const bool include_norm = ctx.config.get_bool("params.include_norm", true);
    const std::string golden_path = ctx.config.get_string("params.golden", "");

    ParamGrid g = param_grid(d, n, layers, include_norm);
    TableWriter w = ctx.writer("params_grid",
                               {"r", "H", "per_layer", "total", "display", "percent"});
    w.meta("linear_total", std::to_string(g.linear_total));
    w.meta("include_norm", include_norm ? "true" : "false");
    for (std::size_t i = 0; i < g.ranks.size(); ++i)
        for (std::size_t j = 0; j < g.heads.size(); ++j) {
            const ParamCount& c = g.cells[i][j];
            w.row({g.ranks[i], g.heads[j], c.per_layer, c.total, display_count(c.total),
                   display_percent(c.fraction_of_linear)});
        }
    ctx.emit(w, "params_grid");

    if (!golden_path.empty()) {
        std::ifstream in(golden_path);
        if (!in) throw std::invalid_argument("params: cannot open golden file '" + golden_path + "'");
        std::string line;
        std::getline(in, line);  // header: r,H,count,percent
        std::size_t count_ok = 0, pct_ok = 0, cells = 0;
        std::string pct_diffs;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ss(line);
            std::string rs, hs, cs, ps;
            std::getline(ss, rs, ',');
            std::getline(ss, hs, ',');
            std::getline(ss, cs, ',');
            std::getline(ss, ps, ',');
            const std::uint64_t r = std::stoull(rs), h = std::stoull(hs);
            const std::uint64_t want_count = std::stoull(cs);
            std::size_t ri = 0, hi = 0;
            for (std::size_t i = 0; i < g.ranks.size(); ++i)
                if (g.ranks[i] == r) ri = i;
            for (std::size_t j = 0; j < g.heads.size(); ++j)
                if (g.heads[j] == h) hi = j;
            ++cells;
            if (g.cells[ri][hi].total == want_count) ++count_ok;
            const std::string got_pct = display_percent(g.cells[ri][hi].fraction_of_linear);
            if (got_pct == ps) {
                ++pct_ok;
            } else {
                pct_diffs += " r" + rs + "H" + hs + ":" + got_pct + "!=" + ps;
            }
        }
        ctx.check("params.counts_match_golden", count_ok == cells,
                  std::to_string(count_ok) + "/" + std::to_string(cells));
        ctx.check("params.percents_match_golden", pct_ok == cells,
                  std::to_string(pct_ok) + "/" + std::to_string(cells) + pct_diffs);
    }
}

// ---------------------------------------------------------------- gradcheck

void cmd_gradcheck(RunContext& ctx) {
    const std::size_t n = ctx.config.get_u64("gradcheck.n_samples", 10000);
    const std::size_t mi = ctx.config.get_u64("gradcheck.model_instances", 40);
    RouterConfig cfg;
    cfg.r = ctx.config.get_u64("gradcheck.r", 2);
    cfg.norm_style = NormStyle::NONE;

    Rng base(ctx.seed);
    Rng rc = base.split("gradcheck/cosine");
    Rng rs = base.split("gradcheck/sips");
    Rng rm = base.split("gradcheck/multi");
    std::vector<GradCheckRow> rows;
    rows.push_back(gradcheck_cosine(rc, n, cfg));
    rows.push_back(gradcheck_sips(rs, n, cfg));
    rows.push_back(gradcheck_multi_anchor(rm, n, cfg));
    rows.push_back(gradcheck_toy_model(base, mi));

    TableWriter w = ctx.writer("gradcheck", {"component", "instances", "max_rel_err", "tolerance"});
    for (const GradCheckRow& r : rows)
        w.row({r.component, static_cast<std::uint64_t>(r.instances), r.max_rel_err, r.tolerance});
    ctx.emit(w, "gradcheck");
    for (const GradCheckRow& r : rows)
        ctx.check("gradcheck." + r.component, r.pass(), "max_rel=" + format_g17(r.max_rel_err));
}

// ------------------------------------------------------------------- bounds

void cmd_bounds(RunContext& ctx) {
    LipschitzDomain dom;
    dom.rho_min = ctx.config.get_double("bounds.rho_min", 0.1);
    dom.rho_max = ctx.config.get_double("bounds.rho_max", 10.0);
    dom.kappa_min = ctx.config.get_double("bounds.kappa_min", 0.1);
    dom.kappa_max = ctx.config.get_double("bounds.kappa_max", 2.0);
    const std::size_t n = ctx.config.get_u64("bounds.n_samples", 100000);
    RouterConfig cfg = router_config_from(ctx.config);
    if (cfg.norm_style == NormStyle::RUNNING_SCALAR_NORM) {
        NormStandardizer ns;  // fresh standardizer; slope at init
        dom.l_norm = ns.slope();
    }

    Rng rng_s(ctx.seed);
    Rng rs = rng_s.split("bounds/sips");
    Rng rd = rng_s.split("bounds/dot");
    RouterConfig sips_cfg = cfg;
    sips_cfg.mode = ScoreMode::L2R_SIPS;
    BoundReport sips = verify_bounds(dom, sips_cfg, n, rs);
    RouterConfig dot_cfg = cfg;
    dot_cfg.mode = ScoreMode::L2R_DOT;
    BoundReport dot = verify_bounds(dom, dot_cfg, n, rd);

    TableWriter w = ctx.writer("bounds", {"mode", "lip_q", "lip_k", "samples_checked",
                                          "max_observed_grad_q", "max_observed_grad_k",
                                          "violations", "l_norm"});
    w.meta("domain", format_g17(dom.rho_min) + " " + format_g17(dom.rho_max) + " " +
                          format_g17(dom.kappa_min) + " " + format_g17(dom.kappa_max));
    w.meta("note", "lip columns are the saturated-scoring constants; the dot row is the "
                   "unbounded contrast and reports observed maxima only");
    auto put = [&](const char* name, const BoundReport& r) {
        w.row({std::string(name), r.lip_q, r.lip_k, static_cast<std::uint64_t>(r.samples_checked),
               r.max_observed_grad_q, r.max_observed_grad_k,
               static_cast<std::uint64_t>(r.violations), r.l_norm});
    };
    put("l2r_sips", sips);
    put("l2r_dot", dot);
    ctx.emit(w, "bounds");

    ctx.check("bounds.sips_no_violations", sips.violations == 0,
              std::to_string(sips.violations) + " violations");
    ctx.check("bounds.sips_under_constants",
              sips.max_observed_grad_q <= sips.lip_q && sips.max_observed_grad_k <= sips.lip_k);
    ctx.check("bounds.dot_contrast", dot.max_observed_grad_q > 0.99 * dom.kappa_max,
              "max=" + format_g17(dot.max_observed_grad_q));
}

// -------------------------------------------------------------------- train

void write_train_run(RunContext& ctx, const TrainRun& run, const std::string& prefix) {
    {
        KeyValueConfig snap;
        router_config_to(run.router_cfg, snap);
        snap.set("train.steps", std::to_string(run.train_cfg.steps));
        snap.set("train.batch_size", std::to_string(run.train_cfg.batch_size));
        snap.set("train.lr", format_g17(run.train_cfg.lr));
        snap.set("train.lambda_bal", format_g17(run.train_cfg.lambda_bal));
        snap.set("train.lambda_z", format_g17(run.train_cfg.lambda_z));
        snap.set("train.snapshot_interval", std::to_string(run.train_cfg.snapshot_interval));
        snap.set("seed", std::to_string(run.train_cfg.seed));
        const std::string fname = prefix + "config_snapshot.cfg";
        std::ofstream out(ctx.output_dir / fname, std::ios::binary);
        out << snap.canonical();
        ctx.outputs.push_back(fname);
    }
    {
        const std::string stem = prefix + "losses";
        TableWriter w = ctx.writer(stem, {"step", "task", "bal", "z", "total"});
        for (std::size_t i = 0; i < run.history.size(); ++i) {
            const LossBreakdown& b = run.history[i];
            w.row({static_cast<std::uint64_t>(i), b.task, b.bal, b.z, b.total});
        }
        ctx.emit(w, stem);
    }
    {
        const std::string stem = prefix + "usage_snapshots";
        TableWriter w = ctx.writer(stem, {"step", "expert", "top1_freq", "topk_freq", "importance"});
        w.meta("importance_definition", "mean full-softmax mass per expert over tokens");
        for (const auto& [step, us] : run.snapshots)
            for (std::size_t i = 0; i < us.top1_freq.size(); ++i)
                w.row({static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(i),
                       us.top1_freq[i], us.topk_freq[i], us.importance[i]});
        ctx.emit(w, stem);
    }
    {
        const std::string stem = prefix + "final_report";
        TableWriter w = ctx.writer(stem, {"key", "value"});
        auto kvrow = [&](const char* k, double v) { w.row({std::string(k), format_g17(v)}); };
        kvrow("ce_initial", run.ce_initial);
        kvrow("ce_final", run.ce_final);
        kvrow("lbal_initial", run.lbal_initial);
        kvrow("lbal_final", run.lbal_final);
        kvrow("entropy_top1", run.entropy_top1);
        kvrow("entropy_importance", run.entropy_importance);
        kvrow("concentration_variance", run.final_concentration.variance);
        kvrow("max_anchor_norm", run.max_anchor_norm);
        w.row({std::string("diverged"), std::string(run.diverged ? "true" : "false")});
        w.row({std::string("steps_run"), std::string(std::to_string(run.history.size()))});
        ctx.emit(w, stem);
    }
}

void cmd_train(RunContext& ctx) {
    RouterConfig rcfg = router_config_from(ctx.config);
    TrainConfig tcfg = train_config_from(ctx.config);
    tcfg.seed = ctx.seed;
    SyntheticDataset ds = dataset_from(ctx.config, rcfg);
    TrainRun run = train(rcfg, tcfg, ds);
    write_train_run(ctx, run, "");
    ctx.check("train.finite", !run.diverged,
              run.diverged ? "halted at step " + std::to_string(run.history.size()) : "");
    ctx.check("train.anchor_norms_in_range",
              rcfg.mode == ScoreMode::LINEAR ||
                  (run.max_anchor_norm > 0.0 && run.max_anchor_norm < 10.0),
              "max=" + format_g17(run.max_anchor_norm));
}

// ------------------------------------------------------------------ compare

void cmd_compare(RunContext& ctx) {
    RouterConfig rcfg = router_config_from(ctx.config);
    TrainConfig tcfg = train_config_from(ctx.config);
    const auto mode_names =
        ctx.config.get_string_list("compare.modes", {"linear", "l2r_sips"});
    const auto seeds = ctx.config.get_u64_list("compare.seeds", {1, 2, 3});
    std::vector<ScoreMode> modes;
    for (const std::string& m : mode_names) modes.push_back(score_mode_from_string(m));
    SyntheticDataset ds = dataset_from(ctx.config, rcfg);

    CompareTable table = compare_modes(rcfg, tcfg, ds, modes, seeds);
    {
        TableWriter w = ctx.writer("compare", {"mode", "seed", "ce_final", "lbal_final",
                                               "entropy_top1", "entropy_importance",
                                               "concentration_variance"});
        for (const CompareRow& r : table.rows)
            w.row({to_string(r.mode), r.seed, r.ce_final, r.lbal_final, r.entropy_top1,
                   r.entropy_importance, r.concentration_variance});
        ctx.emit(w, "compare");
    }
    {
        TableWriter w = ctx.writer("compare_summary", {"mode", "metric", "mean", "half_range"});
        auto put = [&](ScoreMode m, const char* name, auto field) {
            auto [mean, half] = table.aggregate(m, field);
            w.row({to_string(m), std::string(name), mean, half});
        };
        for (ScoreMode m : modes) {
            put(m, "ce_final", [](const CompareRow& r) { return r.ce_final; });
            put(m, "lbal_final", [](const CompareRow& r) { return r.lbal_final; });
            put(m, "entropy_top1", [](const CompareRow& r) { return r.entropy_top1; });
            put(m, "concentration_variance",
                [](const CompareRow& r) { return r.concentration_variance; });
        }
        ctx.emit(w, "compare_summary");
    }
    ctx.check("compare.completed", table.rows.size() == modes.size() * seeds.size());
}

// -------------------------------------------------------------- usage / pca

struct RoutedDataset {
    SyntheticDataset ds;
    ToyMoEModel model;
    std::vector<RoutingDecision> decisions;
    std::vector<Vec> queries;
};

RoutedDataset route_dataset(RunContext& ctx) {
    RoutedDataset out;
    RouterConfig rcfg = router_config_from(ctx.config);
    out.ds = dataset_from(ctx.config, rcfg);
    const std::size_t steps = ctx.config.get_u64("usage.train_steps", 0);
    TrainConfig tcfg = train_config_from(ctx.config);
    tcfg.steps = steps;
    tcfg.seed = ctx.seed;
    TrainRun run = train(rcfg, tcfg, out.ds);
    out.model = std::move(run.model);
    for (const Sample& s : out.ds.samples) {
        Vec z = route_logits(s.x, out.model.router, rcfg);
        out.decisions.push_back(make_decision(z, rcfg.tau, rcfg.top_k));
        if (out.model.is_linear()) {
            out.queries.push_back(s.x);
        } else {
            const auto& st = std::get<LatentRouterState>(out.model.router);
            out.queries.push_back(project_query(s.x, st.proj, rcfg));
        }
    }
    return out;
}

void cmd_usage(RunContext& ctx) {
    RoutedDataset rd = route_dataset(ctx);
    const std::size_t n = rd.model.cfg.n_experts;
    UsageStats st = expert_usage(rd.decisions, n);
    auto [h1, hi] = usage_entropy(st);
    TableWriter w = ctx.writer("usage", {"expert", "top1_freq", "topk_freq", "importance"});
    w.meta("importance_definition", "mean full-softmax mass per expert over tokens");
    w.meta("entropy_top1", format_g17(h1));
    w.meta("entropy_importance", format_g17(hi));
    for (std::size_t i = 0; i < n; ++i)
        w.row({static_cast<std::uint64_t>(i), st.top1_freq[i], st.topk_freq[i], st.importance[i]});
    ctx.emit(w, "usage");

    double s1 = 0.0, sk = 0.0, si = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s1 += st.top1_freq[i];
        sk += st.topk_freq[i];
        si += st.importance[i];
    }
    const double k = static_cast<double>(rd.model.cfg.top_k);
    ctx.check("usage.sums", std::fabs(s1 - 1.0) <= 1e-9 && std::fabs(sk - k) <= 1e-9 &&
                                std::fabs(si - 1.0) <= 1e-9);
}

void cmd_pca_export(RunContext& ctx) {
    RoutedDataset rd = route_dataset(ctx);
    std::vector<Vec> tokens;
    for (const Sample& s : rd.ds.samples) tokens.push_back(s.x);
    auto rows = export_routing_pca(tokens, rd.queries, rd.decisions);
    TableWriter w = ctx.writer("pca_export", {"x_pc1", "x_pc2", "q1", "q2", "top1_expert"});
    w.meta("q_columns", rd.model.cfg.r == 2 ? "raw routing-space coordinates (r=2)"
                                            : "PCA of routing-space queries");
    for (const PcaExportRow& r : rows)
        w.row({r.x_pc1, r.x_pc2, r.q1, r.q2, static_cast<std::uint64_t>(r.top1)});
    ctx.emit(w, "pca_export");
    ctx.check("pca.rows_written", rows.size() == rd.ds.samples.size());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"L2R routing diagnostics and toy MoE training"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand name

    std::string config_path;
    std::string output_dir = "l2r_out";
    std::string format_flag;
    std::optional<std::uint64_t> seed_flag;
    app.add_option("--config,-c", config_path, "flat key=value config file");
    app.add_option("--output-dir,-o", output_dir, "directory for data files and manifest");
    app.add_option("--format", format_flag, "csv or json-lines (beats the config key)");
    app.add_option("--seed", seed_flag, "seed override (beats L2R_SEED and the config)");

    struct Command {
        std::string name;
        void (*fn)(RunContext&);
        const char* help;
    };
    const std::vector<Command> commands = {
        {"landscape", cmd_landscape, "score fields over a 2-D query plane for a fixed anchor"},
        {"variance", cmd_variance, "pairwise cosine-similarity variance of isotropic samples"},
        {"params", cmd_params, "router parameter grid over ranks and head counts"},
        {"gradcheck", cmd_gradcheck, "analytic gradients vs central finite differences"},
        {"bounds", cmd_bounds, "empirical check of the gradient-norm bounds"},
        {"train", cmd_train, "train the toy MoE on synthetic clusters"},
        {"compare", cmd_compare, "train several scoring modes across seeds and tabulate"},
        {"usage", cmd_usage, "per-expert usage statistics over the synthetic dataset"},
        {"pca-export", cmd_pca_export, "token/query PCA coordinates with top-1 expert labels"},
    };
    for (const auto& c : commands) app.add_subcommand(c.name, c.help);

    CLI11_PARSE(app, argc, argv);

    RunContext ctx;
    for (const Command& c : commands)
        if (app.got_subcommand(c.name)) ctx.command = c.name;

    try {
        ctx.output_dir = output_dir;
        fs::create_directories(ctx.output_dir);
        if (!config_path.empty()) ctx.config = KeyValueConfig::parse_file(config_path);
        const std::string format = ctx.config.get_string("format", "csv");
        ctx.format = table_format_from_string(format_flag.empty() ? format : format_flag);

        ctx.seed = ctx.config.get_u64("seed", 2025);
        if (const char* env = std::getenv("L2R_SEED")) ctx.seed = std::stoull(env);
        if (seed_flag) ctx.seed = *seed_flag;
        ctx.config.set("seed", std::to_string(ctx.seed));
        ctx.config.get_u64("seed", 0);  // seed is always a known key
        ctx.config_hash = ctx.config.hash_hex();

        for (const Command& c : commands)
            if (ctx.command == c.name) c.fn(ctx);

        ctx.config.reject_unknown_keys();
        write_manifest(ctx);
        for (const Check& c : ctx.checks)
            std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name
                      << (c.detail.empty() ? "" : "  (" + c.detail + ")") << "\n";
        if (!ctx.all_pass()) {
            std::cerr << "l2r " << ctx.command << ": checks failed\n";
            return 1;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "l2r " << ctx.command << ": error: " << e.what() << "\n";
        // structured error report; manifest still records the failure
        try {
            ctx.check("command.completed", false, e.what());
            write_manifest(ctx);
        } catch (...) {
        }
        return 2;
    }
}
