#pragma once

#include "cdepth/tensor.hpp"

namespace cdepth {

struct LossWeights {
    float beta_p = 0.15f;
    float beta_ss = 0.85f;
    float beta_s = 0.1f;
};

/// Mean absolute difference over valid pixels. mask is 1 x 1 x H x W with
/// entries in {0, 1}; an all-zero mask is an error.
TensorPtr photometric_l1(Tape& tape, const TensorPtr& reconstructed, const TensorPtr& target,
                         const TensorPtr& mask);

/// Mean of (1 - SSIM) / 2 over valid window centers, 3 x 3 uniform
/// windows, C1 = 0.01^2, C2 = 0.03^2. A window counts as valid only when
/// all nine of its pixels are valid in the mask.
TensorPtr ssim_loss(Tape& tape, const TensorPtr& reconstructed, const TensorPtr& target,
                    const TensorPtr& mask);

/// Edge-aware smoothness on the mean-normalized disparity with
/// first-order forward differences.
TensorPtr smoothness(Tape& tape, const TensorPtr& disparity, const TensorPtr& image);

struct LossBreakdown {
    TensorPtr total;
    TensorPtr pixel;
    TensorPtr ssim;
    TensorPtr smooth;
};

/// beta_p * L_p + beta_ss * L_ss + beta_s * L_s.
LossBreakdown combined_loss(Tape& tape, const TensorPtr& reconstructed, const TensorPtr& target,
                            const TensorPtr& disparity, const TensorPtr& source_image,
                            const TensorPtr& mask, const LossWeights& w);

}  // namespace cdepth
