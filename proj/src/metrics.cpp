#include "cdepth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cdepth {

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

MetricSet compute_metrics(const Tensor& pred, const Tensor& gt, const Tensor& mask, Align align) {
    if (pred.shape != gt.shape || mask.data.size() != gt.data.size())
        throw std::invalid_argument("compute_metrics: shape mismatch");
    std::vector<double> p, g;
    for (std::size_t i = 0; i < gt.data.size(); ++i) {
        if (mask.data[i] == 0.0f) continue;
        if (!(gt.data[i] > 0.0f))
            throw std::invalid_argument("compute_metrics: ground truth must be positive on the mask");
        p.push_back(pred.data[i]);
        g.push_back(gt.data[i]);
    }
    if (p.empty()) throw std::invalid_argument("compute_metrics: mask has no valid pixels");

    if (align == Align::median) {
        double scale = median_of(g) / median_of(p);
        for (auto& v : p) v *= scale;
    }

    MetricSet m;
    const double n = static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        double d = p[i], ds = g[i];
        double diff = d - ds;
        m.rmse += diff * diff;
        m.abs_rel += std::fabs(diff) / ds;
        m.sq_rel += diff * diff / ds;
        double ld = std::log(d) - std::log(ds);
        m.log_rmse += ld * ld;
        double ratio = std::max(d / ds, ds / d);
        if (ratio < 1.25) m.delta_1 += 1.0;
        if (ratio < 1.25 * 1.25) m.delta_2 += 1.0;
        if (ratio < 1.25 * 1.25 * 1.25) m.delta_3 += 1.0;
    }
    m.rmse = std::sqrt(m.rmse / n);
    m.abs_rel /= n;
    m.sq_rel /= n;
    m.log_rmse = std::sqrt(m.log_rmse / n);
    m.delta_1 /= n;
    m.delta_2 /= n;
    m.delta_3 /= n;
    return m;
}

MetricSet mean_metrics(const std::vector<MetricSet>& sets) {
    if (sets.empty()) throw std::invalid_argument("mean_metrics: empty input");
    MetricSet m;
    for (const auto& s : sets) {
        m.rmse += s.rmse;
        m.abs_rel += s.abs_rel;
        m.sq_rel += s.sq_rel;
        m.log_rmse += s.log_rmse;
        m.delta_1 += s.delta_1;
        m.delta_2 += s.delta_2;
        m.delta_3 += s.delta_3;
    }
    const double n = static_cast<double>(sets.size());
    m.rmse /= n;
    m.abs_rel /= n;
    m.sq_rel /= n;
    m.log_rmse /= n;
    m.delta_1 /= n;
    m.delta_2 /= n;
    m.delta_3 /= n;
    return m;
}

ProtocolRow aggregate_protocol(long step, const std::string& event,
                               const std::vector<std::pair<int, MetricSet>>& per_domain,
                               const std::vector<std::pair<int, int>>& domain_dist,
                               int online_distribution, int current_online_domain,
                               const std::vector<int>& seen_before) {
    ProtocolRow row;
    row.step = step;
    row.event = event;
    row.online_domain = current_online_domain;
    row.per_domain = per_domain;

    auto dist_of = [&](int dom) {
        for (auto [d, dist] : domain_dist)
            if (d == dom) return dist;
        throw std::invalid_argument("aggregate_protocol: unknown domain id " + std::to_string(dom));
    };

    std::vector<MetricSet> cur, cross, seen;
    for (const auto& [dom, m] : per_domain) {
        if (dist_of(dom) == online_distribution)
            cur.push_back(m);
        else
            cross.push_back(m);
        if (std::find(seen_before.begin(), seen_before.end(), dom) != seen_before.end())
            seen.push_back(m);
        if (dom == current_online_domain) row.online_adapt = m;
    }
    if (!cur.empty()) row.current_dist = mean_metrics(cur);
    if (!cross.empty()) row.cross_dist = mean_metrics(cross);
    if (!seen.empty()) row.cross_domain = mean_metrics(seen);
    return row;
}

std::vector<CurvePoint> normalize_curves(const std::vector<ProtocolRow>& method,
                                         const std::vector<ProtocolRow>& baseline) {
    double max_cur = 0.0, max_cross = 0.0;
    for (const auto& r : baseline) {
        if (r.current_dist) max_cur = std::max(max_cur, r.current_dist->rmse);
        if (r.cross_dist) max_cross = std::max(max_cross, r.cross_dist->rmse);
    }
    if (max_cur == 0.0 || max_cross == 0.0)
        throw std::invalid_argument("normalize_curves: baseline maximum RMSE is zero");
    std::vector<CurvePoint> out;
    for (const auto& r : method) {
        if (!r.current_dist || !r.cross_dist) continue;
        out.push_back({r.step, r.current_dist->rmse / max_cur, r.cross_dist->rmse / max_cross});
    }
    return out;
}

}  // namespace cdepth
