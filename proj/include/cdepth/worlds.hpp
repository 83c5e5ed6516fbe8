#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cdepth/replay.hpp"
#include "cdepth/tensor.hpp"
#include "cdepth/warp.hpp"

namespace cdepth {

/// Parameter family of one synthetic scene. Frames are a pure function of
/// (spec, frame index).
struct DomainSpec {
    int domain_id = 0;
    int distribution_id = 0;
    int width = 64, height = 48;
    float freq_lo = 0.02f, freq_hi = 0.04f;  // texture band, cycles per pixel
    float contrast = 0.35f;
    // hue coordinate in [0,1]: shifts texture energy between the three
    // channels, so domains can differ in appearance at identical geometry
    float palette = 0.5f;
    float z_near = 2.0f, z_far = 8.0f;
    int object_count = 3;
    float focal = 64.0f;     // pixels
    float baseline = 0.25f;  // scene units (stereo)
    std::array<float, 3> cam_vel{0.0f, 0.0f, 0.0f};      // translation per frame (SfM)
    std::array<float, 3> cam_rot_vel{0.0f, 0.0f, 0.0f};  // axis-angle per frame (SfM)
    std::uint64_t seed = 0;
};

struct LabeledSample {
    SampleMode mode = SampleMode::stereo;
    TensorPtr frame_a;      // left image / target frame
    TensorPtr frame_b;      // right image / reference frame
    TensorPtr gt_depth;     // 1 x 1 x H x W
    TensorPtr gt_disparity; // stereo only
    TensorPtr gt_valid;     // 1 x 1 x H x W, occlusion-aware
    CameraParams gt_cam;    // SfM only: target-to-reference transform
    int domain_id = -1;
    int distribution_id = -1;
    float focal = 0.0f;
    float baseline = 0.0f;
};

struct StreamBlock {
    DomainSpec spec;
    int first_frame = 0;
    int frame_count = 0;
};

enum class StreamPhase { pretrain, online };

struct StreamPlan {
    StreamPhase phase = StreamPhase::pretrain;
    std::vector<StreamBlock> blocks;

    int total_frames() const;
};

/// Rectified stereo pair with exact integer per-layer disparities, so the
/// ground-truth warp reproduces the right image exactly off occlusions.
LabeledSample render_stereo(const DomainSpec& spec, int idx);

/// Frames t-1 (reference) and t (target) under the spec's camera motion,
/// with ground-truth depth and relative pose attached. Requires t >= 1.
LabeledSample render_sequence(const DomainSpec& spec, int t);

LabeledSample render_sample(SampleMode mode, const DomainSpec& spec, int idx);

struct BenchmarkOptions {
    SampleMode mode = SampleMode::stereo;
    int width = 64, height = 48;
    int domains_per_distribution = 6;
    int frames_per_domain = 600;
    int eval_frames_per_domain = 10;
    int online_distribution = 1;  // distribution id streamed during online training
};

struct EvalSet {
    DomainSpec spec;
    std::vector<int> frame_indices;  // held-out tail, never streamed for training
};

struct Benchmark {
    StreamPlan pretrain;
    StreamPlan online;
    std::vector<EvalSet> eval_sets;  // one per domain, both distributions
};

/// Two distributions (0: near, high-frequency texture; 1: far,
/// low-frequency texture), six domains each by default. Half of each
/// distribution's domains go to pretraining; the online stream holds the
/// remaining domains of the online distribution, block-contiguous. The
/// last 10% of every domain's frames are held out for evaluation.
Benchmark make_benchmark(std::uint64_t seed, const BenchmarkOptions& opts = {});

/// Binary PPM (P6) export of a 1 x 3 x H x W image in [0, 1].
void write_ppm(const std::string& path, const Tensor& image);

/// Little-endian float map with a one-line scale header.
void write_pfm(const std::string& path, const Tensor& map);

}  // namespace cdepth
