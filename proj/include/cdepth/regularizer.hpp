#pragma once

#include "cdepth/tensor.hpp"

namespace cdepth {

/// Copy of every parameter value at the previous optimizer step, together
/// with the importance weights omega = |theta_prev|. Refresh after every
/// optimizer step.
struct ImportanceSnapshot {
    std::vector<std::vector<float>> theta_prev;
    std::vector<std::vector<float>> omega;
};

ImportanceSnapshot snapshot(const ParamSet& params);

/// Sum_i omega_i * |theta_i - theta_prev_i| as a tape scalar, with the
/// L1 subgradient convention sign(0) = 0.
TensorPtr reg_loss(Tape& tape, const ParamSet& params, const ImportanceSnapshot& snap);

/// task_loss + gamma * D * reg.
TensorPtr total_loss(Tape& tape, const TensorPtr& task_loss, float d, const TensorPtr& reg,
                     float gamma);

}  // namespace cdepth
