#pragma once

#include <array>

#include "cdepth/tensor.hpp"

namespace cdepth {

/// Pinhole intrinsics plus a rigid transform. Rotation is axis-angle in
/// radians; the zero vector is the identity rotation.
struct CameraParams {
    float fx = 1.0f, fy = 1.0f;
    float cx = 0.0f, cy = 0.0f;
    std::array<float, 3> rotation{0.0f, 0.0f, 0.0f};
    std::array<float, 3> translation{0.0f, 0.0f, 0.0f};

    /// Layout [rx, ry, rz, tx, ty, tz, fx, fy, cx, cy].
    std::array<float, 10> to_vector() const;
    static CameraParams from_vector(const std::array<float, 10>& v);
};

/// 3x3 rotation matrix from axis-angle via Rodrigues' formula, row-major.
std::array<float, 9> rotation_matrix(const std::array<float, 3>& axis_angle);

struct WarpResult {
    TensorPtr reconstructed;  // same shape as the source image
    TensorPtr valid_mask;     // 1 x 1 x H x W, entries in {0, 1}, not on tape
};

struct SampleResult {
    std::vector<float> value;  // one entry per channel, 0 when out of bounds
    bool in_bounds = false;
};

/// Bilinear lookup of a 1 x C x H x W image at continuous (x, y).
/// Out-of-bounds coordinates yield value 0 and in_bounds false.
SampleResult bilinear_sample(const Tensor& src, float x, float y);

/// Stereo reconstruction: out(x, y) = I_l(x + d(x, y), y), bilinearly
/// interpolated. Differentiable w.r.t. d and I_l.
WarpResult warp_stereo(Tape& tape, const TensorPtr& left, const TensorPtr& disparity);

/// SfM reconstruction: each target pixel is back-projected with the
/// intrinsics and its depth, rigidly transformed, re-projected and
/// sampled from the reference image. cam_vec holds the 10 CameraParams
/// entries and may sit on the tape; gradients flow into depth and
/// cam_vec. Throws on any non-positive depth entry.
WarpResult warp_sfm(Tape& tape, const TensorPtr& reference, const TensorPtr& depth,
                    const TensorPtr& cam_vec);

/// depth = focal * baseline / d, elementwise. Throws if any d <= 0.
TensorPtr disparity_to_depth(Tape& tape, const TensorPtr& disparity, float focal,
                             float baseline);

}  // namespace cdepth
