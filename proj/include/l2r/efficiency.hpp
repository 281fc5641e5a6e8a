#pragma once

// Exact router parameter accounting and per-token routing cost. The low-rank
// router per layer is d*r (projection) + N*H*r (anchors) + d (input norm
// gain); the bare dr + NHr variant without the norm term is available for
// comparison, since published totals include the norm parameters.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace l2r {

struct ParamCount {
    std::uint64_t per_layer = 0;
    std::uint64_t total = 0;
    double fraction_of_linear = 1.0;
};

inline ParamCount linear_router_params(std::uint64_t d, std::uint64_t n_experts,
                                       std::uint64_t layers) {
    if (d == 0 || n_experts == 0 || layers == 0)
        throw std::invalid_argument("linear_router_params: arguments must be positive");
    ParamCount p;
    p.per_layer = d * n_experts;
    p.total = p.per_layer * layers;
    p.fraction_of_linear = 1.0;
    return p;
}

inline ParamCount l2r_router_params(std::uint64_t d, std::uint64_t r, std::uint64_t n_experts,
                                    std::uint64_t h, std::uint64_t layers, bool include_norm) {
    if (d == 0 || r == 0 || n_experts == 0 || h == 0 || layers == 0)
        throw std::invalid_argument("l2r_router_params: arguments must be positive");
    if (r > d) throw std::invalid_argument("l2r_router_params: r must be <= d");
    ParamCount p;
    p.per_layer = d * r + n_experts * h * r + (include_norm ? d : 0);
    p.total = p.per_layer * layers;
    p.fraction_of_linear =
        static_cast<double>(p.total) / static_cast<double>(d * n_experts * layers);
    return p;
}

/// Per-token multiply-add counts. Pooling work is O(N*H) and reported
/// separately from the MACs.
struct RoutingCost {
    std::uint64_t macs = 0;
    std::uint64_t pooling_ops = 0;
    double ratio_vs_linear = 1.0;  // r/N + H*r/d for the low-rank router
    std::string asymptotic;
};

inline RoutingCost routing_flops_linear(std::uint64_t d, std::uint64_t n_experts) {
    RoutingCost c;
    c.macs = d * n_experts;
    c.pooling_ops = 0;
    c.ratio_vs_linear = 1.0;
    c.asymptotic = "O(dN)";
    return c;
}

inline RoutingCost routing_flops_l2r(std::uint64_t d, std::uint64_t r, std::uint64_t n_experts,
                                     std::uint64_t h) {
    RoutingCost c;
    c.macs = d * r + n_experts * h * r;
    c.pooling_ops = n_experts * h;
    c.ratio_vs_linear = static_cast<double>(r) / static_cast<double>(n_experts) +
                        static_cast<double>(h) * static_cast<double>(r) / static_cast<double>(d);
    c.asymptotic = "O(dr + NHr)";
    return c;
}

/// The published 5x5 parameter grid: ranks x heads, counts and percentages
/// relative to the linear router.
struct ParamGrid {
    std::vector<std::uint64_t> ranks{2, 4, 8, 16, 32};
    std::vector<std::uint64_t> heads{1, 2, 4, 8, 16};
    std::uint64_t d = 2048, n_experts = 64, layers = 16;
    bool include_norm = true;
    std::vector<std::vector<ParamCount>> cells;  // ranks x heads
    std::uint64_t linear_total = 0;
};

inline ParamGrid param_grid(std::uint64_t d, std::uint64_t n_experts, std::uint64_t layers,
                            bool include_norm = true) {
    ParamGrid g;
    g.d = d;
    g.n_experts = n_experts;
    g.layers = layers;
    g.include_norm = include_norm;
    g.linear_total = linear_router_params(d, n_experts, layers).total;
    g.cells.resize(g.ranks.size());
    for (std::size_t i = 0; i < g.ranks.size(); ++i) {
        g.cells[i].reserve(g.heads.size());
        for (std::size_t j = 0; j < g.heads.size(); ++j)
            g.cells[i].push_back(
                l2r_router_params(d, g.ranks[i], n_experts, g.heads[j], layers, include_norm));
    }
    return g;
}

/// "100.352K" / "1.606M" style display used by the published grid.
inline std::string display_count(std::uint64_t total) {
    char buf[32];
    if (total >= 1000000) {
        std::snprintf(buf, sizeof(buf), "%.3fM", static_cast<double>(total) / 1e6);
    } else {
        std::snprintf(buf, sizeof(buf), "%.3fK", static_cast<double>(total) / 1e3);
    }
    return buf;
}

inline std::string display_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
    return buf;
}

}  // namespace l2r
