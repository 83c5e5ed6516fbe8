#include "cdepth/models.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace cdepth {

namespace {

void check_size(int h, int w) {
    if (h <= 0 || w <= 0 || h % 8 != 0 || w % 8 != 0)
        throw std::invalid_argument("model: image size must be positive multiples of 8, got " +
                                    std::to_string(w) + "x" + std::to_string(h));
}

ConvLayer make_conv(std::mt19937_64& rng, int in_c, int out_c, int k, int stride, int pad) {
    ConvLayer l;
    l.weight = make_tensor({out_c, in_c, k, k}, true);
    l.bias = make_tensor({out_c}, true);
    l.stride = stride;
    l.padding = pad;
    float bound = std::sqrt(2.0f / static_cast<float>(in_c * k * k));
    std::normal_distribution<float> dist(0.0f, bound);
    for (auto& v : l.weight->data) v = dist(rng);
    return l;
}

void add_conv(ParamSet& ps, const std::string& name, const ConvLayer& l) {
    ps.add(name + ".w", l.weight);
    ps.add(name + ".b", l.bias);
}

TensorPtr conv_elu(Tape& tape, const ConvLayer& l, const TensorPtr& x) {
    return activation(tape, Act::elu, conv2d(tape, x, l.weight, l.bias, l.stride, l.padding));
}

// softplus(raw + b0) == 1 at raw == 0
constexpr float kSoftplusUnitShift = 0.5413248546f;  // ln(e - 1)

}  // namespace

ParamSet DisparityNet::params(const std::string& prefix) const {
    ParamSet ps;
    add_conv(ps, prefix + ".enc0", enc0);
    add_conv(ps, prefix + ".enc1", enc1);
    add_conv(ps, prefix + ".enc2", enc2);
    add_conv(ps, prefix + ".dec2", dec2);
    add_conv(ps, prefix + ".dec1", dec1);
    add_conv(ps, prefix + ".dec0", dec0);
    add_conv(ps, prefix + ".head", head);
    return ps;
}

ParamSet PoseNet::params(const std::string& prefix) const {
    ParamSet ps;
    add_conv(ps, prefix + ".c0", c0);
    add_conv(ps, prefix + ".c1", c1);
    add_conv(ps, prefix + ".c2", c2);
    add_conv(ps, prefix + ".c3", c3);
    add_conv(ps, prefix + ".rot", head_rot);
    add_conv(ps, prefix + ".trans", head_trans);
    add_conv(ps, prefix + ".focal", head_focal);
    add_conv(ps, prefix + ".center", head_center);
    return ps;
}

TensorPtr predict_disparity(Tape& tape, const DisparityNet& net, const TensorPtr& image) {
    if (image->shape.size() != 4 || image->shape[2] != net.height || image->shape[3] != net.width)
        throw std::invalid_argument("predict_disparity: image size does not match the network");
    auto e0 = conv_elu(tape, net.enc0, image);  // H/2
    auto e1 = conv_elu(tape, net.enc1, e0);     // H/4
    auto e2 = conv_elu(tape, net.enc2, e1);     // H/8

    auto up2 = resize_bilinear(tape, e2, net.height / 4, net.width / 4);
    auto d2 = conv_elu(tape, net.dec2, concat_channels(tape, {up2, e1}));
    auto up1 = resize_bilinear(tape, d2, net.height / 2, net.width / 2);
    auto d1 = conv_elu(tape, net.dec1, concat_channels(tape, {up1, e0}));
    auto up0 = resize_bilinear(tape, d1, net.height, net.width);
    auto d0 = conv_elu(tape, net.dec0, up0);

    auto raw = conv2d(tape, d0, net.head.weight, net.head.bias, 1, net.head.padding);
    auto squashed = activation(tape, Act::sigmoid, raw);
    return add_scalar(tape, mul_scalar(tape, squashed, net.d_max - net.d_min), net.d_min);
}

CameraParams PosePrediction::decoded() const {
    std::array<float, 10> v{};
    for (int i = 0; i < 10; ++i) v[i] = cam_vec->data[i];
    return CameraParams::from_vector(v);
}

PosePrediction predict_pose(Tape& tape, const PoseNet& net, const TensorPtr& target,
                            const TensorPtr& reference) {
    if (target->shape != reference->shape)
        throw std::invalid_argument("predict_pose: frame shapes differ");
    if (target->shape[2] != net.height || target->shape[3] != net.width)
        throw std::invalid_argument("predict_pose: frame size does not match the network");

    auto x = concat_channels(tape, {target, reference});
    x = conv_elu(tape, net.c0, x);
    x = conv_elu(tape, net.c1, x);
    x = conv_elu(tape, net.c2, x);
    x = conv_elu(tape, net.c3, x);
    auto pooled = global_avg_pool(tape, x);

    auto head = [&](const ConvLayer& l) {
        return conv2d(tape, pooled, l.weight, l.bias, 1, 0);
    };
    auto rot = mul_scalar(tape, head(net.head_rot), 0.01f);
    auto trans = mul_scalar(tape, head(net.head_trans), 0.01f);
    const float w = static_cast<float>(net.width);
    const float h = static_cast<float>(net.height);
    auto focal_raw = add_scalar(tape, head(net.head_focal), kSoftplusUnitShift);
    auto focal = mul_scalar(tape, activation(tape, Act::softplus, focal_raw), w);
    auto center = mul(tape, activation(tape, Act::sigmoid, head(net.head_center)),
                      from_data({1, 2, 1, 1}, {w, h}));

    auto cam = concat_channels(tape, {rot, trans, focal, center});
    PosePrediction out;
    out.cam_vec = reshape(tape, cam, {10});
    return out;
}

DisparityNet build_disparity_net(int h, int w, std::uint64_t seed) {
    check_size(h, w);
    std::mt19937_64 rng(seed);
    DisparityNet net;
    net.height = h;
    net.width = w;
    net.d_min = 0.1f;
    net.d_max = 0.22f * static_cast<float>(w);
    net.enc0 = make_conv(rng, 3, 16, 3, 2, 1);
    net.enc1 = make_conv(rng, 16, 32, 3, 2, 1);
    net.enc2 = make_conv(rng, 32, 64, 3, 2, 1);
    net.dec2 = make_conv(rng, 64 + 32, 32, 3, 1, 1);
    net.dec1 = make_conv(rng, 32 + 16, 16, 3, 1, 1);
    net.dec0 = make_conv(rng, 16, 16, 3, 1, 1);
    net.head = make_conv(rng, 16, 1, 3, 1, 1);
    return net;
}

PoseNet build_pose_net(int h, int w, std::uint64_t seed) {
    check_size(h, w);
    std::mt19937_64 rng(seed);
    PoseNet net;
    net.height = h;
    net.width = w;
    net.c0 = make_conv(rng, 6, 16, 3, 2, 1);
    net.c1 = make_conv(rng, 16, 32, 3, 2, 1);
    net.c2 = make_conv(rng, 32, 64, 3, 2, 1);
    net.c3 = make_conv(rng, 64, 64, 3, 2, 1);
    net.head_rot = make_conv(rng, 64, 3, 1, 1, 0);
    net.head_trans = make_conv(rng, 64, 3, 1, 1, 0);
    net.head_focal = make_conv(rng, 64, 2, 1, 1, 0);
    net.head_center = make_conv(rng, 64, 2, 1, 1, 0);
    return net;
}

ModelPair build_default_nets(int h, int w, std::uint64_t seed) {
    return {build_disparity_net(h, w, seed), build_pose_net(h, w, seed + 1)};
}

}  // namespace cdepth
