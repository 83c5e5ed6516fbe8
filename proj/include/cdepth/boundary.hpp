#pragma once

namespace cdepth {

/// Running Gaussian model of the training loss. mu and var follow the
/// low-pass updates; var has no decay term, so it never shrinks while the
/// loss sits away from mu. The variance floor keeps the Mahalanobis
/// division safe.
struct LossStats {
    float mu = 0.0f;
    float var = 0.0f;
    float alpha = 0.1f;
    long count = 0;

    static constexpr float kVarFloor = 1e-8f;
    static constexpr float kInitVar = 1e-4f;
    static constexpr int kWarmupSteps = 10;

    bool warmed_up() const { return count >= kWarmupSteps; }
};

/// Squared Mahalanobis distance of a loss value under the current stats.
/// Returns 0 while the detector is still warming up.
float mahalanobis(const LossStats& stats, float loss);

/// 0.5 * D + log(sigma * sqrt(2*pi)).
float log_new_task_prob(const LossStats& stats, float loss);

/// In-place low-pass update of mu and var; throws on non-finite loss and
/// leaves the stats untouched. The first observation initializes mu.
void update(LossStats& stats, float loss);

/// Boundary evidence rule: strictly greater than one.
bool is_boundary(float d);

}  // namespace cdepth
