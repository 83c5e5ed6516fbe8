#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cdepth {

/// Dense float tensor with optional gradient storage. Image data uses
/// N x C x H x W layout.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until backward reaches this tensor
    bool requires_grad = false;

    int size() const;
    bool has_grad() const { return !grad.empty(); }
    void ensure_grad();
    void zero_grad() { grad.clear(); }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false);
TensorPtr constant(std::vector<int> shape, float value);
TensorPtr scalar(float value);
TensorPtr from_data(std::vector<int> shape, std::vector<float> values,
                    bool requires_grad = false);

/// Record of executed differentiable operations. Backward replays the
/// record in reverse execution order exactly once.
class Tape {
public:
    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

    /// Seeds grad(loss)=1 and propagates through every recorded op.
    /// Throws if loss is not a scalar.
    void backward(const TensorPtr& loss);

private:
    std::vector<std::function<void()>> nodes_;
};

enum class Binary { add, sub, mul, div };
enum class Act { relu, elu, sigmoid, softplus };
enum class Reduce { mean, sum };

// Elementwise ops support equal shapes plus single-element broadcast on
// either side; anything else is a shape error.
TensorPtr binary(Tape& tape, Binary kind, const TensorPtr& a, const TensorPtr& b);
TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr divide(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr add_scalar(Tape& tape, const TensorPtr& a, float s);
TensorPtr mul_scalar(Tape& tape, const TensorPtr& a, float s);

TensorPtr activation(Tape& tape, Act kind, const TensorPtr& x);
TensorPtr abs_value(Tape& tape, const TensorPtr& x);
TensorPtr exp_value(Tape& tape, const TensorPtr& x);

/// input N x C x H x W, kernel O x C x k x k, optional bias of size O.
TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, int stride, int padding);

/// Align-corners-false bilinear resize of an N x C x H x W tensor.
TensorPtr resize_bilinear(Tape& tape, const TensorPtr& x, int new_h, int new_w);

/// Reductions accumulate in double before narrowing back to float.
TensorPtr reduce(Tape& tape, Reduce kind, const TensorPtr& x);

TensorPtr reshape(Tape& tape, const TensorPtr& x, std::vector<int> new_shape);
TensorPtr concat_channels(Tape& tape, const std::vector<TensorPtr>& parts);

/// First-order forward differences along x (output width W-1) and y
/// (output height H-1).
TensorPtr diff_x(Tape& tape, const TensorPtr& x);
TensorPtr diff_y(Tape& tape, const TensorPtr& x);

/// N x C x H x W -> N x C x 1 x 1 spatial mean.
TensorPtr global_avg_pool(Tape& tape, const TensorPtr& x);

/// Mean over the channel dimension, N x C x H x W -> N x 1 x H x W.
TensorPtr channel_mean(Tape& tape, const TensorPtr& x);

struct ParamSet {
    std::vector<std::pair<std::string, TensorPtr>> items;

    void add(std::string name, TensorPtr t);
    TensorPtr find(const std::string& name) const;
    std::size_t value_count() const;
};

struct AdamState {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.99f;
    float eps = 1e-8f;
    std::int64_t step_count = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
};

void adam_init(AdamState& state, const ParamSet& params);

/// Bias-corrected Adam update. Throws naming the parameter if its
/// gradient is missing. Gradients are cleared afterwards.
void adam_step(ParamSet& params, AdamState& state);

/// Binary checkpoint: magic, version, then per named parameter the name,
/// rank, shape and little-endian float payload; optimizer state follows
/// the same layout when present. Round-trip is bit-exact.
void save_checkpoint(const std::string& path, const ParamSet& params,
                     const AdamState* opt = nullptr);
void load_checkpoint(const std::string& path, ParamSet& params,
                     AdamState* opt = nullptr);

}  // namespace cdepth
