#include "cdepth/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cdepth {

namespace {

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

int product(const std::vector<int>& s) {
    int p = 1;
    for (int d : s) {
        if (d <= 0) throw std::invalid_argument("non-positive dimension in shape " + shape_str(s));
        p *= d;
    }
    return p;
}

}  // namespace

int Tensor::size() const {
    int p = 1;
    for (int d : shape) p *= d;
    return p;
}

void Tensor::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
}

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    int n = product(shape);
    t->shape = std::move(shape);
    t->data.assign(static_cast<std::size_t>(n), 0.0f);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr constant(std::vector<int> shape, float value) {
    auto t = make_tensor(std::move(shape), false);
    for (auto& x : t->data) x = value;
    return t;
}

TensorPtr scalar(float value) { return constant({1}, value); }

TensorPtr from_data(std::vector<int> shape, std::vector<float> values, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    int n = product(shape);
    if (static_cast<std::size_t>(n) != values.size())
        throw std::invalid_argument("from_data: shape " + shape_str(shape) + " does not match " +
                                    std::to_string(values.size()) + " values");
    t->shape = std::move(shape);
    t->data = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

void Tape::backward(const TensorPtr& loss) {
    if (loss->size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(loss->shape));
    loss->ensure_grad();
    loss->grad[0] = 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

namespace {

TensorPtr result_like(const TensorPtr& a, const TensorPtr& b) {
    const TensorPtr& big = (a->size() >= b->size()) ? a : b;
    return make_tensor(big->shape, a->requires_grad || b->requires_grad);
}

bool broadcast_ok(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape == b->shape) return true;
    return a->size() == 1 || b->size() == 1;
}

}  // namespace

TensorPtr binary(Tape& tape, Binary kind, const TensorPtr& a, const TensorPtr& b) {
    if (!broadcast_ok(a, b))
        throw std::invalid_argument("elementwise: incompatible shapes " + shape_str(a->shape) +
                                    " vs " + shape_str(b->shape));
    auto out = result_like(a, b);
    const int n = out->size();
    const bool a_scalar = a->size() == 1 && n > 1;
    const bool b_scalar = b->size() == 1 && n > 1;
    for (int i = 0; i < n; ++i) {
        float av = a->data[a_scalar ? 0 : i];
        float bv = b->data[b_scalar ? 0 : i];
        float r = 0.0f;
        switch (kind) {
            case Binary::add: r = av + bv; break;
            case Binary::sub: r = av - bv; break;
            case Binary::mul: r = av * bv; break;
            case Binary::div: r = av / bv; break;
        }
        out->data[i] = r;
    }
    if (out->requires_grad) {
        tape.record([kind, a, b, out, n, a_scalar, b_scalar]() {
            if (a->requires_grad) a->ensure_grad();
            if (b->requires_grad) b->ensure_grad();
            double acc_a = 0.0, acc_b = 0.0;
            for (int i = 0; i < n; ++i) {
                float g = out->grad[i];
                float av = a->data[a_scalar ? 0 : i];
                float bv = b->data[b_scalar ? 0 : i];
                float ga = 0.0f, gb = 0.0f;
                switch (kind) {
                    case Binary::add: ga = g; gb = g; break;
                    case Binary::sub: ga = g; gb = -g; break;
                    case Binary::mul: ga = g * bv; gb = g * av; break;
                    case Binary::div:
                        ga = g / bv;
                        gb = -g * av / (bv * bv);
                        break;
                }
                if (a->requires_grad) {
                    if (a_scalar) acc_a += ga; else a->grad[i] += ga;
                }
                if (b->requires_grad) {
                    if (b_scalar) acc_b += gb; else b->grad[i] += gb;
                }
            }
            if (a->requires_grad && a_scalar) a->grad[0] += static_cast<float>(acc_a);
            if (b->requires_grad && b_scalar) b->grad[0] += static_cast<float>(acc_b);
        });
    }
    return out;
}

TensorPtr add(Tape& t, const TensorPtr& a, const TensorPtr& b) { return binary(t, Binary::add, a, b); }
TensorPtr sub(Tape& t, const TensorPtr& a, const TensorPtr& b) { return binary(t, Binary::sub, a, b); }
TensorPtr mul(Tape& t, const TensorPtr& a, const TensorPtr& b) { return binary(t, Binary::mul, a, b); }
TensorPtr divide(Tape& t, const TensorPtr& a, const TensorPtr& b) { return binary(t, Binary::div, a, b); }

TensorPtr add_scalar(Tape& t, const TensorPtr& a, float s) {
    return binary(t, Binary::add, a, scalar(s));
}

TensorPtr mul_scalar(Tape& t, const TensorPtr& a, float s) {
    return binary(t, Binary::mul, a, scalar(s));
}

TensorPtr activation(Tape& tape, Act kind, const TensorPtr& x) {
    auto out = make_tensor(x->shape, x->requires_grad);
    const int n = x->size();
    for (int i = 0; i < n; ++i) {
        float v = x->data[i];
        switch (kind) {
            case Act::relu: out->data[i] = v > 0.0f ? v : 0.0f; break;
            case Act::elu: out->data[i] = v > 0.0f ? v : std::expm1(v); break;
            case Act::sigmoid: out->data[i] = 1.0f / (1.0f + std::exp(-v)); break;
            case Act::softplus: out->data[i] = std::log1p(std::exp(-std::fabs(v))) + std::fmax(v, 0.0f); break;
        }
    }
    if (out->requires_grad) {
        tape.record([kind, x, out, n]() {
            x->ensure_grad();
            for (int i = 0; i < n; ++i) {
                float v = x->data[i];
                float d = 0.0f;
                switch (kind) {
                    case Act::relu: d = v > 0.0f ? 1.0f : 0.0f; break;
                    case Act::elu: d = v > 0.0f ? 1.0f : std::exp(v); break;
                    case Act::sigmoid: {
                        float s = out->data[i];
                        d = s * (1.0f - s);
                        break;
                    }
                    case Act::softplus: d = 1.0f / (1.0f + std::exp(-v)); break;
                }
                x->grad[i] += out->grad[i] * d;
            }
        });
    }
    return out;
}

TensorPtr abs_value(Tape& tape, const TensorPtr& x) {
    auto out = make_tensor(x->shape, x->requires_grad);
    const int n = x->size();
    for (int i = 0; i < n; ++i) out->data[i] = std::fabs(x->data[i]);
    if (out->requires_grad) {
        tape.record([x, out, n]() {
            x->ensure_grad();
            for (int i = 0; i < n; ++i) {
                float v = x->data[i];
                // subgradient: sign(0) = 0
                float s = v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f);
                x->grad[i] += out->grad[i] * s;
            }
        });
    }
    return out;
}

TensorPtr exp_value(Tape& tape, const TensorPtr& x) {
    auto out = make_tensor(x->shape, x->requires_grad);
    const int n = x->size();
    for (int i = 0; i < n; ++i) out->data[i] = std::exp(x->data[i]);
    if (out->requires_grad) {
        tape.record([x, out, n]() {
            x->ensure_grad();
            for (int i = 0; i < n; ++i) x->grad[i] += out->grad[i] * out->data[i];
        });
    }
    return out;
}

TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, int stride, int padding) {
    if (input->shape.size() != 4 || kernel->shape.size() != 4)
        throw std::invalid_argument("conv2d: expected 4-D input and kernel, got " +
                                    shape_str(input->shape) + " and " + shape_str(kernel->shape));
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    const int N = input->shape[0], C = input->shape[1], H = input->shape[2], W = input->shape[3];
    const int O = kernel->shape[0], KC = kernel->shape[1], KH = kernel->shape[2], KW = kernel->shape[3];
    if (KC != C)
        throw std::invalid_argument("conv2d: channel mismatch, input has " + std::to_string(C) +
                                    " channels but kernel expects " + std::to_string(KC));
    if (bias && bias->size() != O)
        throw std::invalid_argument("conv2d: bias size must equal output channels");
    const int OH = (H + 2 * padding - KH) / stride + 1;
    const int OW = (W + 2 * padding - KW) / stride + 1;
    if (OH <= 0 || OW <= 0)
        throw std::invalid_argument("conv2d: kernel larger than padded input");

    bool rg = input->requires_grad || kernel->requires_grad || (bias && bias->requires_grad);
    auto out = make_tensor({N, O, OH, OW}, rg);

    auto forward_at = [&](int n, int o, int oy, int ox) {
        float acc = bias ? bias->data[o] : 0.0f;
        const float* kbase = kernel->data.data() + static_cast<std::size_t>(o) * C * KH * KW;
        for (int c = 0; c < C; ++c) {
            const float* ibase = input->data.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
            const float* kc = kbase + static_cast<std::size_t>(c) * KH * KW;
            for (int ky = 0; ky < KH; ++ky) {
                int iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < KW; ++kx) {
                    int ix = ox * stride - padding + kx;
                    if (ix < 0 || ix >= W) continue;
                    acc += ibase[iy * W + ix] * kc[ky * KW + kx];
                }
            }
        }
        return acc;
    };

    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox)
                    out->data[((static_cast<std::size_t>(n) * O + o) * OH + oy) * OW + ox] =
                        forward_at(n, o, oy, ox);

    if (rg) {
        tape.record([input, kernel, bias, out, stride, padding, N, C, H, W, O, KH, KW, OH, OW]() {
            if (input->requires_grad) input->ensure_grad();
            if (kernel->requires_grad) kernel->ensure_grad();
            if (bias && bias->requires_grad) bias->ensure_grad();
            for (int n = 0; n < N; ++n) {
                for (int o = 0; o < O; ++o) {
                    for (int oy = 0; oy < OH; ++oy) {
                        for (int ox = 0; ox < OW; ++ox) {
                            float g = out->grad[((static_cast<std::size_t>(n) * O + o) * OH + oy) * OW + ox];
                            if (g == 0.0f) continue;
                            if (bias && bias->requires_grad) bias->grad[o] += g;
                            for (int c = 0; c < C; ++c) {
                                std::size_t ioff = (static_cast<std::size_t>(n) * C + c) * H * W;
                                std::size_t koff = (static_cast<std::size_t>(o) * C + c) * KH * KW;
                                for (int ky = 0; ky < KH; ++ky) {
                                    int iy = oy * stride - padding + ky;
                                    if (iy < 0 || iy >= H) continue;
                                    for (int kx = 0; kx < KW; ++kx) {
                                        int ix = ox * stride - padding + kx;
                                        if (ix < 0 || ix >= W) continue;
                                        float iv = input->data[ioff + iy * W + ix];
                                        float kv = kernel->data[koff + ky * KW + kx];
                                        if (input->requires_grad)
                                            input->grad[ioff + iy * W + ix] += g * kv;
                                        if (kernel->requires_grad)
                                            kernel->grad[koff + ky * KW + kx] += g * iv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr resize_bilinear(Tape& tape, const TensorPtr& x, int new_h, int new_w) {
    if (x->shape.size() != 4)
        throw std::invalid_argument("resize_bilinear: expected 4-D tensor");
    if (new_h <= 0 || new_w <= 0)
        throw std::invalid_argument("resize_bilinear: target size must be positive");
    const int N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
    auto out = make_tensor({N, C, new_h, new_w}, x->requires_grad);

    // align-corners-false: src = (dst + 0.5) * (in/out) - 0.5, clamped
    const float sy = static_cast<float>(H) / static_cast<float>(new_h);
    const float sx = static_cast<float>(W) / static_cast<float>(new_w);

    struct Sample { int y0, y1, x0, x1; float wy, wx; };
    std::vector<Sample> samples(static_cast<std::size_t>(new_h) * new_w);
    for (int oy = 0; oy < new_h; ++oy) {
        float fy = (oy + 0.5f) * sy - 0.5f;
        if (fy < 0.0f) fy = 0.0f;
        if (fy > H - 1) fy = static_cast<float>(H - 1);
        int y0 = static_cast<int>(std::floor(fy));
        int y1 = y0 + 1 < H ? y0 + 1 : y0;
        for (int ox = 0; ox < new_w; ++ox) {
            float fx = (ox + 0.5f) * sx - 0.5f;
            if (fx < 0.0f) fx = 0.0f;
            if (fx > W - 1) fx = static_cast<float>(W - 1);
            int x0 = static_cast<int>(std::floor(fx));
            int x1 = x0 + 1 < W ? x0 + 1 : x0;
            samples[static_cast<std::size_t>(oy) * new_w + ox] =
                {y0, y1, x0, x1, fy - y0, fx - x0};
        }
    }

    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const float* src = x->data.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
            float* dst = out->data.data() + (static_cast<std::size_t>(n) * C + c) * new_h * new_w;
            for (int oy = 0; oy < new_h; ++oy) {
                for (int ox = 0; ox < new_w; ++ox) {
                    const Sample& s = samples[static_cast<std::size_t>(oy) * new_w + ox];
                    float top = src[s.y0 * W + s.x0] * (1 - s.wx) + src[s.y0 * W + s.x1] * s.wx;
                    float bot = src[s.y1 * W + s.x0] * (1 - s.wx) + src[s.y1 * W + s.x1] * s.wx;
                    dst[oy * new_w + ox] = top * (1 - s.wy) + bot * s.wy;
                }
            }
        }
    }

    if (x->requires_grad) {
        tape.record([x, out, samples, N, C, H, W, new_h, new_w]() {
            x->ensure_grad();
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < C; ++c) {
                    float* gsrc = x->grad.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
                    const float* gdst = out->grad.data() +
                                        (static_cast<std::size_t>(n) * C + c) * new_h * new_w;
                    for (int oy = 0; oy < new_h; ++oy) {
                        for (int ox = 0; ox < new_w; ++ox) {
                            const Sample& s = samples[static_cast<std::size_t>(oy) * new_w + ox];
                            float g = gdst[oy * new_w + ox];
                            gsrc[s.y0 * W + s.x0] += g * (1 - s.wy) * (1 - s.wx);
                            gsrc[s.y0 * W + s.x1] += g * (1 - s.wy) * s.wx;
                            gsrc[s.y1 * W + s.x0] += g * s.wy * (1 - s.wx);
                            gsrc[s.y1 * W + s.x1] += g * s.wy * s.wx;
                        }
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr reduce(Tape& tape, Reduce kind, const TensorPtr& x) {
    auto out = make_tensor({1}, x->requires_grad);
    const int n = x->size();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += x->data[i];
    out->data[0] = static_cast<float>(kind == Reduce::mean ? acc / n : acc);
    if (x->requires_grad) {
        tape.record([kind, x, out, n]() {
            x->ensure_grad();
            float g = out->grad[0];
            float w = kind == Reduce::mean ? g / static_cast<float>(n) : g;
            for (int i = 0; i < n; ++i) x->grad[i] += w;
        });
    }
    return out;
}

TensorPtr reshape(Tape& tape, const TensorPtr& x, std::vector<int> new_shape) {
    int p = 1;
    for (int d : new_shape) p *= d;
    if (p != x->size())
        throw std::invalid_argument("reshape: element count mismatch, " + shape_str(x->shape) +
                                    " -> " + shape_str(new_shape));
    auto out = std::make_shared<Tensor>();
    out->shape = std::move(new_shape);
    out->data = x->data;
    out->requires_grad = x->requires_grad;
    if (x->requires_grad) {
        tape.record([x, out]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i];
        });
    }
    return out;
}

TensorPtr concat_channels(Tape& tape, const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
    const int N = parts[0]->shape[0], H = parts[0]->shape[2], W = parts[0]->shape[3];
    int total_c = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p->shape.size() != 4 || p->shape[0] != N || p->shape[2] != H || p->shape[3] != W)
            throw std::invalid_argument("concat_channels: mismatched shapes");
        total_c += p->shape[1];
        rg = rg || p->requires_grad;
    }
    auto out = make_tensor({N, total_c, H, W}, rg);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        int coff = 0;
        for (const auto& p : parts) {
            int pc = p->shape[1];
            std::memcpy(out->data.data() + (static_cast<std::size_t>(n) * total_c + coff) * plane,
                        p->data.data() + static_cast<std::size_t>(n) * pc * plane,
                        static_cast<std::size_t>(pc) * plane * sizeof(float));
            coff += pc;
        }
    }
    if (rg) {
        tape.record([parts, out, N, total_c, plane]() {
            for (int n = 0; n < N; ++n) {
                int coff = 0;
                for (const auto& p : parts) {
                    int pc = p->shape[1];
                    if (p->requires_grad) {
                        p->ensure_grad();
                        const float* g = out->grad.data() +
                                         (static_cast<std::size_t>(n) * total_c + coff) * plane;
                        float* pg = p->grad.data() + static_cast<std::size_t>(n) * pc * plane;
                        for (std::size_t i = 0; i < pc * plane; ++i) pg[i] += g[i];
                    }
                    coff += pc;
                }
            }
        });
    }
    return out;
}

namespace {

TensorPtr forward_diff(Tape& tape, const TensorPtr& x, bool along_x) {
    if (x->shape.size() != 4) throw std::invalid_argument("diff: expected 4-D tensor");
    const int N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
    const int OH = along_x ? H : H - 1;
    const int OW = along_x ? W - 1 : W;
    if (OH <= 0 || OW <= 0) throw std::invalid_argument("diff: input too small");
    auto out = make_tensor({N, C, OH, OW}, x->requires_grad);
    for (int nc = 0; nc < N * C; ++nc) {
        const float* src = x->data.data() + static_cast<std::size_t>(nc) * H * W;
        float* dst = out->data.data() + static_cast<std::size_t>(nc) * OH * OW;
        for (int y = 0; y < OH; ++y)
            for (int xx = 0; xx < OW; ++xx)
                dst[y * OW + xx] = along_x ? src[y * W + xx + 1] - src[y * W + xx]
                                           : src[(y + 1) * W + xx] - src[y * W + xx];
    }
    if (x->requires_grad) {
        tape.record([x, out, N, C, H, W, OH, OW, along_x]() {
            x->ensure_grad();
            for (int nc = 0; nc < N * C; ++nc) {
                float* gs = x->grad.data() + static_cast<std::size_t>(nc) * H * W;
                const float* gd = out->grad.data() + static_cast<std::size_t>(nc) * OH * OW;
                for (int y = 0; y < OH; ++y) {
                    for (int xx = 0; xx < OW; ++xx) {
                        float g = gd[y * OW + xx];
                        if (along_x) {
                            gs[y * W + xx + 1] += g;
                            gs[y * W + xx] -= g;
                        } else {
                            gs[(y + 1) * W + xx] += g;
                            gs[y * W + xx] -= g;
                        }
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace

TensorPtr diff_x(Tape& tape, const TensorPtr& x) { return forward_diff(tape, x, true); }
TensorPtr diff_y(Tape& tape, const TensorPtr& x) { return forward_diff(tape, x, false); }

TensorPtr global_avg_pool(Tape& tape, const TensorPtr& x) {
    if (x->shape.size() != 4) throw std::invalid_argument("global_avg_pool: expected 4-D tensor");
    const int N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
    const int plane = H * W;
    auto out = make_tensor({N, C, 1, 1}, x->requires_grad);
    for (int nc = 0; nc < N * C; ++nc) {
        const float* src = x->data.data() + static_cast<std::size_t>(nc) * plane;
        double acc = 0.0;
        for (int i = 0; i < plane; ++i) acc += src[i];
        out->data[nc] = static_cast<float>(acc / plane);
    }
    if (x->requires_grad) {
        tape.record([x, out, N, C, plane]() {
            x->ensure_grad();
            for (int nc = 0; nc < N * C; ++nc) {
                float g = out->grad[nc] / static_cast<float>(plane);
                float* gs = x->grad.data() + static_cast<std::size_t>(nc) * plane;
                for (int i = 0; i < plane; ++i) gs[i] += g;
            }
        });
    }
    return out;
}

TensorPtr channel_mean(Tape& tape, const TensorPtr& x) {
    if (x->shape.size() != 4) throw std::invalid_argument("channel_mean: expected 4-D tensor");
    const int N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    auto out = make_tensor({N, 1, H, W}, x->requires_grad);
    for (int n = 0; n < N; ++n) {
        float* dst = out->data.data() + static_cast<std::size_t>(n) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            double acc = 0.0;
            for (int c = 0; c < C; ++c)
                acc += x->data[(static_cast<std::size_t>(n) * C + c) * plane + i];
            dst[i] = static_cast<float>(acc / C);
        }
    }
    if (x->requires_grad) {
        tape.record([x, out, N, C, plane]() {
            x->ensure_grad();
            for (int n = 0; n < N; ++n) {
                const float* g = out->grad.data() + static_cast<std::size_t>(n) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    float gv = g[i] / static_cast<float>(C);
                    for (int c = 0; c < C; ++c)
                        x->grad[(static_cast<std::size_t>(n) * C + c) * plane + i] += gv;
                }
            }
        });
    }
    return out;
}

void ParamSet::add(std::string name, TensorPtr t) {
    items.emplace_back(std::move(name), std::move(t));
}

TensorPtr ParamSet::find(const std::string& name) const {
    for (const auto& [n, t] : items)
        if (n == name) return t;
    return nullptr;
}

std::size_t ParamSet::value_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items) n += t->data.size();
    return n;
}

void adam_init(AdamState& state, const ParamSet& params) {
    state.step_count = 0;
    state.m.clear();
    state.v.clear();
    for (const auto& [name, t] : params.items) {
        state.m.emplace_back(t->data.size(), 0.0f);
        state.v.emplace_back(t->data.size(), 0.0f);
    }
}

void adam_step(ParamSet& params, AdamState& state) {
    if (state.m.size() != params.items.size())
        throw std::invalid_argument("adam_step: state not initialized for this parameter set");
    for (const auto& [name, t] : params.items)
        if (!t->has_grad())
            throw std::runtime_error("adam_step: missing gradient for parameter '" + name + "'");
    state.step_count += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    for (std::size_t p = 0; p < params.items.size(); ++p) {
        auto& t = params.items[p].second;
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (std::size_t i = 0; i < t->data.size(); ++i) {
            float g = t->grad[i];
            m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g);
            v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * static_cast<double>(g) * g);
            double mhat = m[i] / corr1;
            double vhat = v[i] / corr2;
            t->data[i] -= static_cast<float>(state.lr * mhat / (std::sqrt(vhat) + state.eps));
        }
        t->zero_grad();
    }
}

namespace {

constexpr char kMagic[8] = {'C', 'D', 'E', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

void write_floats(std::ostream& os, const std::vector<float>& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void read_floats(std::istream& is, std::vector<float>& v) {
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void write_named_array(std::ostream& os, const std::string& name,
                       const std::vector<int>& shape, const std::vector<float>& data) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) write_u32(os, static_cast<std::uint32_t>(d));
    write_floats(os, data);
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& params, const AdamState* opt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(params.items.size()));
    for (const auto& [name, t] : params.items)
        write_named_array(os, name, t->shape, t->data);
    write_u32(os, opt ? 1u : 0u);
    if (opt) {
        write_floats(os, {opt->lr, opt->beta1, opt->beta2, opt->eps});
        std::uint64_t sc = static_cast<std::uint64_t>(opt->step_count);
        os.write(reinterpret_cast<const char*>(&sc), sizeof(sc));
        for (std::size_t p = 0; p < params.items.size(); ++p) {
            const auto& t = params.items[p].second;
            write_named_array(os, params.items[p].first + ".m", t->shape, opt->m[p]);
            write_named_array(os, params.items[p].first + ".v", t->shape, opt->v[p]);
        }
    }
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

void load_checkpoint(const std::string& path, ParamSet& params, AdamState* opt) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    if (read_u32(is) != kVersion)
        throw std::runtime_error("load_checkpoint: unsupported version in " + path);
    std::uint32_t n = read_u32(is);
    if (n != params.items.size())
        throw std::runtime_error("load_checkpoint: parameter count mismatch in " + path);

    auto read_named_array = [&](const std::string& expect_name, const std::vector<int>& expect_shape,
                                std::vector<float>& out) {
        std::uint32_t len = read_u32(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (name != expect_name)
            throw std::runtime_error("load_checkpoint: expected parameter '" + expect_name +
                                     "', found '" + name + "'");
        std::uint32_t rank = read_u32(is);
        if (rank != expect_shape.size())
            throw std::runtime_error("load_checkpoint: rank mismatch for " + name);
        for (std::size_t i = 0; i < rank; ++i)
            if (read_u32(is) != static_cast<std::uint32_t>(expect_shape[i]))
                throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
        read_floats(is, out);
    };

    for (auto& [name, t] : params.items)
        read_named_array(name, t->shape, t->data);

    std::uint32_t has_opt = read_u32(is);
    if (opt) {
        if (!has_opt) throw std::runtime_error("load_checkpoint: no optimizer state in " + path);
        std::vector<float> consts(4);
        read_floats(is, consts);
        opt->lr = consts[0];
        opt->beta1 = consts[1];
        opt->beta2 = consts[2];
        opt->eps = consts[3];
        std::uint64_t sc = 0;
        is.read(reinterpret_cast<char*>(&sc), sizeof(sc));
        opt->step_count = static_cast<std::int64_t>(sc);
        opt->m.assign(params.items.size(), {});
        opt->v.assign(params.items.size(), {});
        for (std::size_t p = 0; p < params.items.size(); ++p) {
            const auto& [name, t] = params.items[p];
            opt->m[p].resize(t->data.size());
            opt->v[p].resize(t->data.size());
            read_named_array(name + ".m", t->shape, opt->m[p]);
            read_named_array(name + ".v", t->shape, opt->v[p]);
        }
    }
    if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path);
}

}  // namespace cdepth
