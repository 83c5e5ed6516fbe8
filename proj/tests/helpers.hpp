#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cdepth/tensor.hpp"

namespace testutil {

inline void fill_uniform(const cdepth::TensorPtr& t, std::mt19937& rng, float lo, float hi) {
    std::uniform_real_distribution<float> dist(lo, hi);
    for (auto& v : t->data) v = dist(rng);
}

/// Maximum relative error between the analytic gradient of a scalar loss
/// and central finite differences over every element of every listed
/// parameter. loss_fn must rebuild the graph from the current parameter
/// values on the tape it is given. Elements where both the analytic and
/// numeric gradients are below signal_floor carry no signal and are
/// skipped.
inline double fd_max_rel_error(const std::vector<cdepth::TensorPtr>& params,
                               const std::function<cdepth::TensorPtr(cdepth::Tape&)>& loss_fn,
                               float step = 1e-3f, float signal_floor = 1e-2f) {
    cdepth::Tape tape;
    for (const auto& p : params) p->zero_grad();
    auto loss = loss_fn(tape);
    tape.backward(loss);
    std::vector<std::vector<float>> analytic;
    for (const auto& p : params)
        analytic.push_back(p->has_grad() ? p->grad : std::vector<float>(p->data.size(), 0.0f));

    auto eval = [&]() {
        cdepth::Tape scratch;
        return loss_fn(scratch)->data[0];
    };

    // Scale of the analytic gradient; differences far below it carry no
    // information regardless of their relative size.
    double gscale = 0.0;
    for (const auto& g : analytic)
        for (float v : g) gscale = std::max(gscale, static_cast<double>(std::fabs(v)));
    const double atol = 1e-3 * std::max(gscale, 1e-12);

    // The forward pass runs in float32, so a single step size cannot
    // simultaneously avoid round-off (wants a large step) and truncation
    // (wants a small step); each element takes the better of two steps.
    // The small step also rides out piecewise-linear kinks (bilinear cell
    // boundaries) that a larger step would straddle.
    const float steps[4] = {step, 3.0f * step, 10.0f * step, 0.2f * step};
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& data = params[pi]->data;
        for (std::size_t i = 0; i < data.size(); ++i) {
            double an = analytic[pi][i];
            double best = -1.0;
            for (float h : steps) {
                float saved = data[i];
                data[i] = saved + h;
                double lp = eval();
                data[i] = saved - h;
                double lm = eval();
                data[i] = saved;
                double fd = (lp - lm) / (2.0 * h);
                double mag = std::max(std::fabs(an), std::fabs(fd));
                if (mag < signal_floor || std::fabs(an - fd) <= atol) {
                    best = 0.0;
                    break;
                }
                double err = std::fabs(an - fd) / mag;
                if (best < 0.0 || err < best) best = err;
            }
            worst = std::max(worst, std::max(best, 0.0));
        }
    }
    return worst;
}

}  // namespace testutil
