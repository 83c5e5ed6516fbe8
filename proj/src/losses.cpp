#include "cdepth/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace cdepth {

namespace {

double mask_sum(const TensorPtr& mask) {
    double s = 0.0;
    for (float v : mask->data) s += v;
    return s;
}

// Replicate a 1 x 1 x H x W mask across C channels (constant, off-tape).
TensorPtr expand_mask(const TensorPtr& mask, int channels) {
    if (channels == 1) return mask;
    const std::size_t plane = mask->data.size();
    auto out = make_tensor({1, channels, mask->shape[2], mask->shape[3]}, false);
    for (int c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) out->data[c * plane + i] = mask->data[i];
    return out;
}

void check_pair(const TensorPtr& a, const TensorPtr& b, const TensorPtr& mask, const char* what) {
    if (a->shape != b->shape)
        throw std::invalid_argument(std::string(what) + ": image shapes differ");
    if (mask->shape != std::vector<int>{1, 1, a->shape[2], a->shape[3]})
        throw std::invalid_argument(std::string(what) + ": mask shape must be 1 x 1 x H x W");
}

}  // namespace

TensorPtr photometric_l1(Tape& tape, const TensorPtr& reconstructed, const TensorPtr& target,
                         const TensorPtr& mask) {
    check_pair(reconstructed, target, mask, "photometric_l1");
    double valid = mask_sum(mask);
    if (valid == 0.0) throw std::invalid_argument("photometric_l1: mask has no valid pixels");
    const int C = reconstructed->shape[1];
    auto diff = abs_value(tape, sub(tape, reconstructed, target));
    auto masked = mul(tape, diff, expand_mask(mask, C));
    auto total = reduce(tape, Reduce::sum, masked);
    return mul_scalar(tape, total, static_cast<float>(1.0 / (valid * C)));
}

TensorPtr ssim_loss(Tape& tape, const TensorPtr& reconstructed, const TensorPtr& target,
                    const TensorPtr& mask) {
    check_pair(reconstructed, target, mask, "ssim_loss");
    const int C = reconstructed->shape[1], H = reconstructed->shape[2], W = reconstructed->shape[3];
    if (H < 3 || W < 3) throw std::invalid_argument("ssim_loss: image smaller than the 3x3 window");
    constexpr float kC1 = 0.01f * 0.01f;
    constexpr float kC2 = 0.03f * 0.03f;

    // Per-channel 3x3 uniform filtering: fold channels into the batch dim.
    auto box = constant({1, 1, 3, 3}, 1.0f / 9.0f);
    auto filt = [&](const TensorPtr& t) {
        auto flat = reshape(tape, t, {C, 1, H, W});
        return conv2d(tape, flat, box, nullptr, 1, 0);
    };

    auto x = reconstructed;
    auto y = target;
    auto mu_x = filt(x);
    auto mu_y = filt(y);
    auto mu_xx = filt(mul(tape, x, x));
    auto mu_yy = filt(mul(tape, y, y));
    auto mu_xy = filt(mul(tape, x, y));

    auto sigma_x = sub(tape, mu_xx, mul(tape, mu_x, mu_x));
    auto sigma_y = sub(tape, mu_yy, mul(tape, mu_y, mu_y));
    auto sigma_xy = sub(tape, mu_xy, mul(tape, mu_x, mu_y));

    auto num = mul(tape, add_scalar(tape, mul_scalar(tape, mul(tape, mu_x, mu_y), 2.0f), kC1),
                   add_scalar(tape, mul_scalar(tape, sigma_xy, 2.0f), kC2));
    auto den = mul(tape,
                   add_scalar(tape, add(tape, mul(tape, mu_x, mu_x), mul(tape, mu_y, mu_y)), kC1),
                   add_scalar(tape, add(tape, sigma_x, sigma_y), kC2));
    auto ssim = divide(tape, num, den);
    // unfold the batch-packed channels back into the channel dim
    auto loss_map = reshape(tape, mul_scalar(tape, sub(tape, scalar(1.0f), ssim), 0.5f),
                            {1, C, H - 2, W - 2});

    // A window center is valid only if all nine mask pixels under it are.
    const int WH = H - 2, WW = W - 2;
    auto wmask = make_tensor({1, 1, WH, WW}, false);
    double valid = 0.0;
    for (int yy = 0; yy < WH; ++yy) {
        for (int xx = 0; xx < WW; ++xx) {
            bool all = true;
            for (int ky = 0; ky < 3 && all; ++ky)
                for (int kx = 0; kx < 3 && all; ++kx)
                    all = mask->data[(yy + ky) * W + xx + kx] != 0.0f;
            if (all) {
                wmask->data[yy * WW + xx] = 1.0f;
                valid += 1.0;
            }
        }
    }
    if (valid == 0.0) throw std::invalid_argument("ssim_loss: mask has no fully valid windows");

    auto masked = mul(tape, loss_map, expand_mask(wmask, C));
    auto total = reduce(tape, Reduce::sum, masked);
    return mul_scalar(tape, total, static_cast<float>(1.0 / (valid * C)));
}

TensorPtr smoothness(Tape& tape, const TensorPtr& disparity, const TensorPtr& image) {
    if (disparity->shape[2] != image->shape[2] || disparity->shape[3] != image->shape[3])
        throw std::invalid_argument("smoothness: disparity and image sizes differ");
    auto dn = divide(tape, disparity, reduce(tape, Reduce::mean, disparity));
    auto gray = channel_mean(tape, image);

    auto term = [&](bool along_x) {
        auto dd = along_x ? diff_x(tape, dn) : diff_y(tape, dn);
        auto di = along_x ? diff_x(tape, gray) : diff_y(tape, gray);
        auto weight = exp_value(tape, mul_scalar(tape, abs_value(tape, di), -1.0f));
        return reduce(tape, Reduce::mean, mul(tape, abs_value(tape, dd), weight));
    };
    return add(tape, term(true), term(false));
}

LossBreakdown combined_loss(Tape& tape, const TensorPtr& reconstructed, const TensorPtr& target,
                            const TensorPtr& disparity, const TensorPtr& source_image,
                            const TensorPtr& mask, const LossWeights& w) {
    LossBreakdown out;
    out.pixel = photometric_l1(tape, reconstructed, target, mask);
    out.ssim = ssim_loss(tape, reconstructed, target, mask);
    out.smooth = smoothness(tape, disparity, source_image);
    out.total = add(tape,
                    add(tape, mul_scalar(tape, out.pixel, w.beta_p),
                        mul_scalar(tape, out.ssim, w.beta_ss)),
                    mul_scalar(tape, out.smooth, w.beta_s));
    return out;
}

}  // namespace cdepth
