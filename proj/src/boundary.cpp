#include "cdepth/boundary.hpp"

#include <cmath>
#include <stdexcept>

namespace cdepth {

float mahalanobis(const LossStats& stats, float loss) {
    if (!stats.warmed_up()) return 0.0f;
    float diff = loss - stats.mu;
    return diff * diff / stats.var;
}

float log_new_task_prob(const LossStats& stats, float loss) {
    float d = mahalanobis(stats, loss);
    float sigma = std::sqrt(stats.var > 0.0f ? stats.var : LossStats::kVarFloor);
    return 0.5f * d + std::log(sigma * std::sqrt(2.0f * static_cast<float>(M_PI)));
}

void update(LossStats& stats, float loss) {
    if (!std::isfinite(loss))
        throw std::invalid_argument("LossStats::update: non-finite loss value");
    if (stats.count == 0) {
        stats.mu = loss;
        stats.var = LossStats::kInitVar;
        stats.count = 1;
        return;
    }
    float diff = loss - stats.mu;  // uses mu before the update in both rules
    stats.mu += stats.alpha * diff;
    stats.var += stats.alpha * diff * diff;
    if (stats.var < LossStats::kVarFloor) stats.var = LossStats::kVarFloor;
    stats.count += 1;
}

bool is_boundary(float d) { return d > 1.0f; }

}  // namespace cdepth
