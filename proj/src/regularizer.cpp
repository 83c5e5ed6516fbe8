#include "cdepth/regularizer.hpp"

#include <cmath>
#include <stdexcept>

namespace cdepth {

ImportanceSnapshot snapshot(const ParamSet& params) {
    ImportanceSnapshot s;
    s.theta_prev.reserve(params.items.size());
    s.omega.reserve(params.items.size());
    for (const auto& [name, t] : params.items) {
        s.theta_prev.push_back(t->data);
        auto& om = s.omega.emplace_back(t->data);
        for (auto& v : om) v = std::fabs(v);
    }
    return s;
}

TensorPtr reg_loss(Tape& tape, const ParamSet& params, const ImportanceSnapshot& snap) {
    if (snap.theta_prev.size() != params.items.size())
        throw std::invalid_argument("reg_loss: snapshot does not match parameter set");
    for (std::size_t p = 0; p < params.items.size(); ++p)
        if (snap.theta_prev[p].size() != params.items[p].second->data.size())
            throw std::invalid_argument("reg_loss: snapshot shape mismatch for parameter '" +
                                        params.items[p].first + "'");

    auto out = make_tensor({1}, true);
    double acc = 0.0;
    for (std::size_t p = 0; p < params.items.size(); ++p) {
        const auto& t = params.items[p].second;
        const auto& prev = snap.theta_prev[p];
        const auto& om = snap.omega[p];
        for (std::size_t i = 0; i < prev.size(); ++i)
            acc += om[i] * std::fabs(t->data[i] - prev[i]);
    }
    out->data[0] = static_cast<float>(acc);

    std::vector<TensorPtr> tensors;
    tensors.reserve(params.items.size());
    for (const auto& [name, t] : params.items) tensors.push_back(t);
    tape.record([tensors, prev_copy = snap.theta_prev, omega_copy = snap.omega, out]() {
        float g = out->grad[0];
        for (std::size_t p = 0; p < tensors.size(); ++p) {
            const auto& t = tensors[p];
            if (!t->requires_grad) continue;
            t->ensure_grad();
            const auto& prev = prev_copy[p];
            const auto& om = omega_copy[p];
            for (std::size_t i = 0; i < prev.size(); ++i) {
                float diff = t->data[i] - prev[i];
                float s = diff > 0.0f ? 1.0f : (diff < 0.0f ? -1.0f : 0.0f);
                t->grad[i] += g * om[i] * s;
            }
        }
    });
    return out;
}

TensorPtr total_loss(Tape& tape, const TensorPtr& task_loss, float d, const TensorPtr& reg,
                     float gamma) {
    return add(tape, task_loss, mul_scalar(tape, reg, gamma * d));
}

}  // namespace cdepth
