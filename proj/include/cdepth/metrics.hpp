#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cdepth/tensor.hpp"

namespace cdepth {

struct MetricSet {
    double rmse = 0.0;
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double log_rmse = 0.0;
    double delta_1 = 0.0;  // threshold 1.25
    double delta_2 = 0.0;  // 1.25^2
    double delta_3 = 0.0;  // 1.25^3
};

enum class Align { none, median };

/// Depth metrics over the masked pixels. With Align::median the
/// prediction is rescaled by median(gt)/median(pred) first. Log RMSE is
/// the root mean squared log difference. Throws on an empty mask.
MetricSet compute_metrics(const Tensor& pred, const Tensor& gt, const Tensor& mask, Align align);

/// Unweighted mean of per-frame or per-domain metric sets.
MetricSet mean_metrics(const std::vector<MetricSet>& sets);

struct ProtocolRow {
    long step = 0;
    std::string event;  // "cadence" or "transition"
    int online_domain = -1;  // most recently trained online domain, -1 before any
    std::optional<MetricSet> current_dist;
    std::optional<MetricSet> cross_dist;
    std::optional<MetricSet> online_adapt;
    std::optional<MetricSet> cross_domain;
    std::vector<std::pair<int, MetricSet>> per_domain;  // domain id -> metrics
};

/// Aggregates per-domain metric sets into the four protocol categories.
/// domain_dist maps domain id to distribution id; seen_before lists the
/// domains trained strictly before the current one, including the online
/// distribution's pretraining domains.
ProtocolRow aggregate_protocol(long step, const std::string& event,
                               const std::vector<std::pair<int, MetricSet>>& per_domain,
                               const std::vector<std::pair<int, int>>& domain_dist,
                               int online_distribution, int current_online_domain,
                               const std::vector<int>& seen_before);

struct CurvePoint {
    long step = 0;
    double current_rmse_norm = 0.0;
    double cross_rmse_norm = 0.0;
};

/// Divides each series by the maximum of the baseline (fine-tuning) run's
/// matching RMSE series. Throws if a baseline maximum is zero.
std::vector<CurvePoint> normalize_curves(const std::vector<ProtocolRow>& method,
                                         const std::vector<ProtocolRow>& baseline);

}  // namespace cdepth
