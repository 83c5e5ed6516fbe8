#pragma once

#include <cstdint>

#include "cdepth/tensor.hpp"
#include "cdepth/warp.hpp"

namespace cdepth {

struct ConvLayer {
    TensorPtr weight;
    TensorPtr bias;
    int stride = 1;
    int padding = 1;
};

/// UNet-style encoder-decoder with three stride-2 levels and skip
/// connections. Output is scaled into (d_min, d_max) by a sigmoid.
struct DisparityNet {
    int height = 0, width = 0;
    float d_min = 0.1f;
    float d_max = 0.0f;
    ConvLayer enc0, enc1, enc2;
    ConvLayer dec2, dec1, dec0;
    ConvLayer head;

    ParamSet params(const std::string& prefix = "disp") const;
};

/// Convolutional trunk over a stacked frame pair, global average pool,
/// then linear heads for rotation, translation, focal lengths and
/// principal point.
struct PoseNet {
    int height = 0, width = 0;
    ConvLayer c0, c1, c2, c3;
    ConvLayer head_rot, head_trans, head_focal, head_center;

    ParamSet params(const std::string& prefix = "pose") const;
};

/// Disparity map 1 x 1 x H x W with every value in (d_min, d_max).
TensorPtr predict_disparity(Tape& tape, const DisparityNet& net, const TensorPtr& image);

struct PosePrediction {
    TensorPtr cam_vec;  // 10-vector in CameraParams layout, on tape
    CameraParams decoded() const;
};

/// Rotation/translation raw head outputs scaled by 0.01; fx = fy = W and
/// cx = W/2, cy = H/2 at zero raw output, with fx, fy kept positive and
/// the principal point inside the image.
PosePrediction predict_pose(Tape& tape, const PoseNet& net, const TensorPtr& target,
                            const TensorPtr& reference);

/// Deterministic Kaiming-style initialization from the seed. h, w must be
/// multiples of 8.
DisparityNet build_disparity_net(int h, int w, std::uint64_t seed);
PoseNet build_pose_net(int h, int w, std::uint64_t seed);

struct ModelPair {
    DisparityNet disparity;
    PoseNet pose;
};

ModelPair build_default_nets(int h, int w, std::uint64_t seed);

}  // namespace cdepth
