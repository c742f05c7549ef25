#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "langlab/common.hpp"

namespace langlab::analysis {

/// One (inference cost, quality score, configuration) point on the
/// cost-quality plane. Hull math always runs on linear axes, whatever the
/// display scale.
struct ParetoPoint {
    double cost = 0.0;
    double score = 0.0;  // [0, 100]
    std::string config_id;
};

// ---------------------------------------------------------------------------
// Pareto front
// ---------------------------------------------------------------------------

/// Upper-left convex hull of achievable configurations: sorted by ascending
/// cost, strictly increasing score, strictly decreasing segment slopes.
/// Every input point lies on or below the piecewise-linear hull and every
/// vertex is an input point. Equal-cost points collapse to the max-score one
/// before construction.
inline std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
    if (points.empty()) throw ContractError("pareto_front: points must be non-empty");
    for (const auto& p : points)
        if (!std::isfinite(p.cost) || !std::isfinite(p.score))
            throw ContractError("pareto_front: points must be finite");

    // Collapse equal costs, keeping the best score (earliest input on ties).
    std::vector<ParetoPoint> sorted = points;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ParetoPoint& a, const ParetoPoint& b) { return a.cost < b.cost; });
    std::vector<ParetoPoint> collapsed;
    for (const auto& p : sorted) {
        if (!collapsed.empty() && collapsed.back().cost == p.cost) {
            if (p.score > collapsed.back().score) collapsed.back() = p;
        } else {
            collapsed.push_back(p);
        }
    }

    // Dominance sweep: a point survives only if it strictly improves the
    // best score seen at lower cost.
    std::vector<ParetoPoint> frontier;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : collapsed) {
        if (p.score > best) {
            frontier.push_back(p);
            best = p.score;
        }
    }

    // Concave chain: drop interior points on or below the chord of their
    // neighbours (slopes must strictly decrease).
    std::vector<ParetoPoint> hull;
    auto slope = [](const ParetoPoint& a, const ParetoPoint& b) {
        return (b.score - a.score) / (b.cost - a.cost);
    };
    for (const auto& p : frontier) {
        while (hull.size() >= 2 &&
               slope(hull[hull.size() - 2], hull.back()) <= slope(hull.back(), p))
            hull.pop_back();
        hull.push_back(p);
    }
    return hull;
}

/// Hull score at a given cost; clamped to the end vertices outside the range.
inline double hull_interpolate(const std::vector<ParetoPoint>& front, double cost) {
    if (front.empty()) throw ContractError("hull_interpolate: empty front");
    if (cost <= front.front().cost) return front.front().score;
    if (cost >= front.back().cost) return front.back().score;
    for (std::size_t i = 1; i < front.size(); ++i) {
        if (cost <= front[i].cost) {
            const ParetoPoint& a = front[i - 1];
            const ParetoPoint& b = front[i];
            if (cost == a.cost) return a.score;
            if (cost == b.cost) return b.score;
            double w = (cost - a.cost) / (b.cost - a.cost);
            return a.score + w * (b.score - a.score);
        }
    }
    return front.back().score;
}

/// Expected score of the randomized mixture of two hull endpoints at the
/// given budget: exact linear interpolation, endpoint budgets return
/// endpoint scores.
inline double mixture(const ParetoPoint& a, const ParetoPoint& b, double budget) {
    if (!(a.cost < b.cost)) throw ContractError("mixture: requires a.cost < b.cost");
    if (budget < a.cost || budget > b.cost)
        throw ContractError("mixture: budget outside [a.cost, b.cost]");
    if (budget == a.cost) return a.score;
    if (budget == b.cost) return b.score;
    double w = (budget - a.cost) / (b.cost - a.cost);
    return a.score + w * (b.score - a.score);
}

// ---------------------------------------------------------------------------
// Cross-dataset aggregation and curve grouping
// ---------------------------------------------------------------------------

/// One run record projected to what the analysis needs.
struct RecordPoint {
    std::string config_id;  // identity of (model, program, optimizer)
    std::string dataset;
    std::string model_id;
    std::string program_id;
    std::string optimizer_id;
    double score = 0.0;           // aggregate in [0, 100]
    double inference_cost = 0.0;  // currency, linear
};

/// Pareto-curve membership is a pure function of the configuration: whether
/// the program is the raw baseline and whether an optimizer was applied.
inline std::string config_group(const std::string& program_id, const std::string& optimizer_id) {
    const bool baseline_program = program_id == "baseline";
    const bool unoptimized = optimizer_id == "none";
    if (baseline_program && unoptimized) return "model";
    if (!baseline_program && unoptimized) return "model_program";
    if (baseline_program && !unoptimized) return "model_optimizer";
    return "model_program_optimizer";
}

struct AggregatePoint {
    ParetoPoint point;
    std::string group;
};

struct AggregateResult {
    std::vector<AggregatePoint> points;   // one per config covering all datasets
    std::vector<std::string> skipped;     // configs missing some dataset, with reason
};

/// Aggregates per-config across datasets: score = unweighted mean of the
/// per-dataset aggregates, cost = summed per-dataset inference cost. Configs
/// absent from any dataset are skipped and reported.
inline AggregateResult aggregate(const std::vector<RecordPoint>& records) {
    if (records.empty()) throw ContractError("aggregate: no records");
    std::set<std::string> datasets;
    for (const auto& r : records) datasets.insert(r.dataset);

    struct Acc {
        double score_sum = 0.0;
        double cost_sum = 0.0;
        std::set<std::string> seen;
        std::string group;
    };
    std::map<std::string, Acc> by_config;
    for (const auto& r : records) {
        Acc& acc = by_config[r.config_id];
        if (acc.seen.count(r.dataset)) continue;  // first record per dataset wins
        acc.seen.insert(r.dataset);
        acc.score_sum += r.score;
        acc.cost_sum += r.inference_cost;
        acc.group = config_group(r.program_id, r.optimizer_id);
    }

    AggregateResult out;
    for (const auto& [config_id, acc] : by_config) {
        if (acc.seen.size() != datasets.size()) {
            out.skipped.push_back(config_id + ": covers " + std::to_string(acc.seen.size()) +
                                  " of " + std::to_string(datasets.size()) + " datasets");
            continue;
        }
        out.points.push_back(AggregatePoint{
            ParetoPoint{acc.cost_sum, acc.score_sum / static_cast<double>(datasets.size()),
                        config_id},
            acc.group});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimizer statistics
// ---------------------------------------------------------------------------

/// 100 * (optimized - baseline) / baseline; missing when baseline <= 0.
inline std::optional<double> relative_gain(double baseline_score, double optimized_score) {
    if (baseline_score <= 0.0) return std::nullopt;
    return 100.0 * (optimized_score - baseline_score) / baseline_score;
}

struct GainSample {
    std::string optimizer_id;
    double relative_gain = 0.0;
    std::string key;  // (dataset, program, model)
};

struct Percentiles {
    double p10 = 0.0;
    double median = 0.0;
    double p90 = 0.0;
    int count = 0;
};

/// Nearest-rank percentile on ascending-sorted values: index = ceil(n*p/100),
/// 1-based, clamped to at least 1.
inline double nearest_rank(const std::vector<double>& sorted_ascending, double percentile) {
    if (sorted_ascending.empty()) throw ContractError("nearest_rank: empty sample");
    const auto n = static_cast<double>(sorted_ascending.size());
    auto rank = static_cast<std::size_t>(std::ceil(n * percentile / 100.0));
    if (rank < 1) rank = 1;
    if (rank > sorted_ascending.size()) rank = sorted_ascending.size();
    return sorted_ascending[rank - 1];
}

inline std::map<std::string, Percentiles> gain_percentiles(const std::vector<GainSample>& samples) {
    if (samples.empty()) throw ContractError("gain_percentiles: no samples");
    std::map<std::string, std::vector<double>> by_optimizer;
    for (const auto& s : samples) by_optimizer[s.optimizer_id].push_back(s.relative_gain);
    std::map<std::string, Percentiles> out;
    for (auto& [optimizer, gains] : by_optimizer) {
        std::sort(gains.begin(), gains.end());
        out[optimizer] = Percentiles{nearest_rank(gains, 10.0), nearest_rank(gains, 50.0),
                                     nearest_rank(gains, 90.0), static_cast<int>(gains.size())};
    }
    return out;
}

struct RankCounts {
    int top_count = 0;
    int within_count = 0;
};

/// Per (dataset, program, model) group: every optimizer whose score is
/// >= (1 - tolerance) * best increments within_count; the argmax (all of
/// them on ties) increments top_count. The tolerance is relative, not
/// absolute points.
inline std::map<std::string, RankCounts> optimizer_ranking(const std::vector<RecordPoint>& records,
                                                           double tolerance = 0.03) {
    std::map<std::string, std::vector<const RecordPoint*>> groups;
    for (const auto& r : records)
        groups[r.dataset + "\x1f" + r.program_id + "\x1f" + r.model_id].push_back(&r);

    std::map<std::string, RankCounts> out;
    for (const auto& [key, members] : groups) {
        if (members.empty()) continue;
        double best = -std::numeric_limits<double>::infinity();
        for (const auto* r : members) best = std::max(best, r->score);
        for (const auto* r : members) {
            RankCounts& c = out[r->optimizer_id];
            if (r->score >= (1.0 - tolerance) * best) ++c.within_count;
            if (r->score == best) ++c.top_count;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Plot data emission
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace detail

/// Writes the CSV families consumed by plotting: points.csv,
/// front_<group>.csv per non-empty group, optimizer_rank.csv and
/// gain_percentiles.csv. Row order is deterministic; reruns are
/// byte-identical.
inline std::vector<std::string> emit_plot_data(
    const std::string& out_dir, const AggregateResult& agg,
    const std::map<std::string, RankCounts>& ranks,
    const std::map<std::string, Percentiles>& percentiles) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<std::string> written;

    auto open = [&](const std::string& name) {
        std::string path = (fs::path(out_dir) / name).string();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write '" + path + "'");
        written.push_back(path);
        return out;
    };

    {
        auto points = agg.points;
        std::sort(points.begin(), points.end(), [](const AggregatePoint& a, const AggregatePoint& b) {
            return a.point.config_id < b.point.config_id;
        });
        auto out = open("points.csv");
        out << "config_id,group,cost,score\n";
        for (const auto& p : points)
            out << p.point.config_id << "," << p.group << "," << detail::fmt(p.point.cost) << ","
                << detail::fmt(p.point.score) << "\n";
    }

    std::map<std::string, std::vector<ParetoPoint>> by_group;
    for (const auto& p : agg.points) by_group[p.group].push_back(p.point);
    for (const auto& [group, pts] : by_group) {
        if (pts.empty()) continue;  // no front file for an empty group
        auto front = pareto_front(pts);
        auto out = open("front_" + group + ".csv");
        out << "cost,score,config_id\n";
        for (const auto& p : front)
            out << detail::fmt(p.cost) << "," << detail::fmt(p.score) << "," << p.config_id << "\n";
    }

    {
        auto out = open("optimizer_rank.csv");
        out << "optimizer,top_count,within_count\n";
        for (const auto& [optimizer, counts] : ranks)
            out << optimizer << "," << counts.top_count << "," << counts.within_count << "\n";
    }
    {
        auto out = open("gain_percentiles.csv");
        out << "optimizer,p10,median,p90,count\n";
        for (const auto& [optimizer, p] : percentiles)
            out << optimizer << "," << detail::fmt(p.p10) << "," << detail::fmt(p.median) << ","
                << detail::fmt(p.p90) << "," << p.count << "\n";
    }
    return written;
}

}  // namespace langlab::analysis
