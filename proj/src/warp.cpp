#include "cdepth/warp.hpp"

#include <cmath>
#include <stdexcept>

namespace cdepth {

std::array<float, 10> CameraParams::to_vector() const {
    return {rotation[0], rotation[1], rotation[2], translation[0], translation[1],
            translation[2], fx, fy, cx, cy};
}

CameraParams CameraParams::from_vector(const std::array<float, 10>& v) {
    CameraParams c;
    c.rotation = {v[0], v[1], v[2]};
    c.translation = {v[3], v[4], v[5]};
    c.fx = v[6];
    c.fy = v[7];
    c.cx = v[8];
    c.cy = v[9];
    return c;
}

std::array<float, 9> rotation_matrix(const std::array<float, 3>& r) {
    double rx = r[0], ry = r[1], rz = r[2];
    double theta = std::sqrt(rx * rx + ry * ry + rz * rz);
    if (theta < 1e-12) return {1, 0, 0, 0, 1, 0, 0, 0, 1};
    double kx = rx / theta, ky = ry / theta, kz = rz / theta;
    double c = std::cos(theta), s = std::sin(theta), v = 1.0 - c;
    return {static_cast<float>(c + kx * kx * v), static_cast<float>(kx * ky * v - kz * s),
            static_cast<float>(kx * kz * v + ky * s),
            static_cast<float>(ky * kx * v + kz * s), static_cast<float>(c + ky * ky * v),
            static_cast<float>(ky * kz * v - kx * s),
            static_cast<float>(kz * kx * v - ky * s), static_cast<float>(kz * ky * v + kx * s),
            static_cast<float>(c + kz * kz * v)};
}

namespace {

void check_image(const TensorPtr& img, const char* what) {
    if (img->shape.size() != 4 || img->shape[0] != 1)
        throw std::invalid_argument(std::string(what) + ": expected 1 x C x H x W image");
}

// d(R)/d(r_i) for axis-angle r (Gallego & Yezzi). Near zero the limit is
// the skew basis matrix of e_i.
std::array<std::array<double, 9>, 3> rotation_jacobian(const std::array<float, 3>& r) {
    auto Rf = rotation_matrix(r);
    double R[9];
    for (int i = 0; i < 9; ++i) R[i] = Rf[i];
    double rx = r[0], ry = r[1], rz = r[2];
    double n2 = rx * rx + ry * ry + rz * rz;
    std::array<std::array<double, 9>, 3> J{};
    if (n2 < 1e-16) {
        // [e_i]_x
        J[0] = {0, 0, 0, 0, 0, -1, 0, 1, 0};
        J[1] = {0, 0, 1, 0, 0, 0, -1, 0, 0};
        J[2] = {0, -1, 0, 1, 0, 0, 0, 0, 0};
        return J;
    }
    double rv[3] = {rx, ry, rz};
    for (int i = 0; i < 3; ++i) {
        // w = r x ((I - R) e_i)
        double col[3] = {(i == 0) - R[0 + i], (i == 1) - R[3 + i], (i == 2) - R[6 + i]};
        double w[3] = {rv[1] * col[2] - rv[2] * col[1], rv[2] * col[0] - rv[0] * col[2],
                       rv[0] * col[1] - rv[1] * col[0]};
        // A = (r_i [r]_x + [w]_x) / |r|^2
        double A[9] = {0, -rv[2] * rv[i], rv[1] * rv[i],
                       rv[2] * rv[i], 0, -rv[0] * rv[i],
                       -rv[1] * rv[i], rv[0] * rv[i], 0};
        A[1] += -w[2]; A[2] += w[1];
        A[3] += w[2]; A[5] += -w[0];
        A[6] += -w[1]; A[7] += w[0];
        for (double& a : A) a /= n2;
        // J_i = A * R
        for (int row = 0; row < 3; ++row)
            for (int c = 0; c < 3; ++c)
                J[i][row * 3 + c] = A[row * 3 + 0] * R[0 + c] + A[row * 3 + 1] * R[3 + c] +
                                    A[row * 3 + 2] * R[6 + c];
    }
    return J;
}

}  // namespace

SampleResult bilinear_sample(const Tensor& src, float x, float y) {
    const int C = src.shape[1], H = src.shape[2], W = src.shape[3];
    SampleResult out;
    out.value.assign(static_cast<std::size_t>(C), 0.0f);
    if (x < 0.0f || x > W - 1 || y < 0.0f || y > H - 1) return out;
    out.in_bounds = true;
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    int x1 = x0 + 1 < W ? x0 + 1 : x0;
    int y1 = y0 + 1 < H ? y0 + 1 : y0;
    float wx = x - x0, wy = y - y0;
    for (int c = 0; c < C; ++c) {
        const float* p = src.data.data() + static_cast<std::size_t>(c) * H * W;
        float top = p[y0 * W + x0] * (1 - wx) + p[y0 * W + x1] * wx;
        float bot = p[y1 * W + x0] * (1 - wx) + p[y1 * W + x1] * wx;
        out.value[c] = top * (1 - wy) + bot * wy;
    }
    return out;
}

WarpResult warp_stereo(Tape& tape, const TensorPtr& left, const TensorPtr& disparity) {
    check_image(left, "warp_stereo");
    const int C = left->shape[1], H = left->shape[2], W = left->shape[3];
    if (disparity->shape != std::vector<int>{1, 1, H, W})
        throw std::invalid_argument("warp_stereo: disparity shape must be 1 x 1 x H x W matching the image");

    bool rg = left->requires_grad || disparity->requires_grad;
    auto out = make_tensor({1, C, H, W}, rg);
    auto mask = make_tensor({1, 1, H, W}, false);
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            float sx = x + disparity->data[y * W + x];
            if (sx < 0.0f || sx > W - 1) continue;
            mask->data[y * W + x] = 1.0f;
            int x0 = static_cast<int>(std::floor(sx));
            int x1 = x0 + 1 < W ? x0 + 1 : x0;
            float wx = sx - x0;
            for (int c = 0; c < C; ++c) {
                const float* p = left->data.data() + c * plane;
                out->data[c * plane + y * W + x] = p[y * W + x0] * (1 - wx) + p[y * W + x1] * wx;
            }
        }
    }

    if (rg) {
        tape.record([left, disparity, out, mask, C, H, W, plane]() {
            if (left->requires_grad) left->ensure_grad();
            if (disparity->requires_grad) disparity->ensure_grad();
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    if (mask->data[y * W + x] == 0.0f) continue;
                    float sx = x + disparity->data[y * W + x];
                    int x0 = static_cast<int>(std::floor(sx));
                    int x1 = x0 + 1 < W ? x0 + 1 : x0;
                    float wx = sx - x0;
                    float gd = 0.0f;
                    for (int c = 0; c < C; ++c) {
                        float g = out->grad[c * plane + y * W + x];
                        const float* p = left->data.data() + c * plane;
                        gd += g * (p[y * W + x1] - p[y * W + x0]);
                        if (left->requires_grad) {
                            left->grad[c * plane + y * W + x0] += g * (1 - wx);
                            left->grad[c * plane + y * W + x1] += g * wx;
                        }
                    }
                    if (disparity->requires_grad) disparity->grad[y * W + x] += gd;
                }
            }
        });
    }
    return {out, mask};
}

WarpResult warp_sfm(Tape& tape, const TensorPtr& reference, const TensorPtr& depth,
                    const TensorPtr& cam_vec) {
    check_image(reference, "warp_sfm");
    const int C = reference->shape[1], H = reference->shape[2], W = reference->shape[3];
    if (depth->shape != std::vector<int>{1, 1, H, W})
        throw std::invalid_argument("warp_sfm: depth shape must be 1 x 1 x H x W matching the image");
    if (cam_vec->size() != 10)
        throw std::invalid_argument("warp_sfm: camera vector must have 10 entries");
    for (float z : depth->data)
        if (!(z > 0.0f)) throw std::invalid_argument("warp_sfm: depth entries must be positive");

    const std::array<float, 3> rot = {cam_vec->data[0], cam_vec->data[1], cam_vec->data[2]};
    const float tx = cam_vec->data[3], ty = cam_vec->data[4], tz = cam_vec->data[5];
    const float fx = cam_vec->data[6], fy = cam_vec->data[7];
    const float cx = cam_vec->data[8], cy = cam_vec->data[9];
    const auto R = rotation_matrix(rot);

    bool rg = reference->requires_grad || depth->requires_grad || cam_vec->requires_grad;
    auto out = make_tensor({1, C, H, W}, rg);
    auto mask = make_tensor({1, 1, H, W}, false);
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    // Forward projection retained for backward.
    std::vector<float> proj_u(plane), proj_v(plane);

    auto project = [&](int u, int v, float z, float* Yout) {
        float X0 = z * (u - cx) / fx;
        float X1 = z * (v - cy) / fy;
        float Y0 = R[0] * X0 + R[1] * X1 + R[2] * z + tx;
        float Y1 = R[3] * X0 + R[4] * X1 + R[5] * z + ty;
        float Y2 = R[6] * X0 + R[7] * X1 + R[8] * z + tz;
        if (Yout) {
            Yout[0] = Y0;
            Yout[1] = Y1;
            Yout[2] = Y2;
        }
        return Y2 > 1e-6f;
    };

    for (int v = 0; v < H; ++v) {
        for (int u = 0; u < W; ++u) {
            std::size_t idx = static_cast<std::size_t>(v) * W + u;
            float z = depth->data[idx];
            float Y[3];
            if (!project(u, v, z, Y)) continue;
            float pu = fx * Y[0] / Y[2] + cx;
            float pv = fy * Y[1] / Y[2] + cy;
            proj_u[idx] = pu;
            proj_v[idx] = pv;
            if (pu < 0.0f || pu > W - 1 || pv < 0.0f || pv > H - 1) continue;
            mask->data[idx] = 1.0f;
            int x0 = static_cast<int>(std::floor(pu));
            int y0 = static_cast<int>(std::floor(pv));
            int x1 = x0 + 1 < W ? x0 + 1 : x0;
            int y1 = y0 + 1 < H ? y0 + 1 : y0;
            float wx = pu - x0, wy = pv - y0;
            for (int c = 0; c < C; ++c) {
                const float* p = reference->data.data() + c * plane;
                float top = p[y0 * W + x0] * (1 - wx) + p[y0 * W + x1] * wx;
                float bot = p[y1 * W + x0] * (1 - wx) + p[y1 * W + x1] * wx;
                out->data[c * plane + idx] = top * (1 - wy) + bot * wy;
            }
        }
    }

    if (rg) {
        tape.record([reference, depth, cam_vec, out, mask, proj_u, proj_v, R, rot, C, H, W,
                     plane]() {
            const float tx = cam_vec->data[3], ty = cam_vec->data[4], tz = cam_vec->data[5];
            const float fx = cam_vec->data[6], fy = cam_vec->data[7];
            const float cx = cam_vec->data[8], cy = cam_vec->data[9];
            if (reference->requires_grad) reference->ensure_grad();
            if (depth->requires_grad) depth->ensure_grad();
            if (cam_vec->requires_grad) cam_vec->ensure_grad();
            const auto Jr = rotation_jacobian(rot);
            double gcam[10] = {0};

            for (int v = 0; v < H; ++v) {
                for (int u = 0; u < W; ++u) {
                    std::size_t idx = static_cast<std::size_t>(v) * W + u;
                    if (mask->data[idx] == 0.0f) continue;
                    float z = depth->data[idx];
                    float X0 = z * (u - cx) / fx;
                    float X1 = z * (v - cy) / fy;
                    float Y0 = R[0] * X0 + R[1] * X1 + R[2] * z + tx;
                    float Y1 = R[3] * X0 + R[4] * X1 + R[5] * z + ty;
                    float Y2 = R[6] * X0 + R[7] * X1 + R[8] * z + tz;

                    float pu = proj_u[idx], pv = proj_v[idx];
                    int x0 = static_cast<int>(std::floor(pu));
                    int y0 = static_cast<int>(std::floor(pv));
                    int x1 = x0 + 1 < W ? x0 + 1 : x0;
                    int y1 = y0 + 1 < H ? y0 + 1 : y0;
                    float wx = pu - x0, wy = pv - y0;

                    // dL/d(pu), dL/d(pv) from the bilinear weights.
                    float gu = 0.0f, gv = 0.0f;
                    for (int c = 0; c < C; ++c) {
                        float g = out->grad[c * plane + idx];
                        if (g == 0.0f) continue;
                        const float* p = reference->data.data() + c * plane;
                        float a = p[y0 * W + x0], b = p[y0 * W + x1];
                        float cc = p[y1 * W + x0], d = p[y1 * W + x1];
                        gu += g * ((b - a) * (1 - wy) + (d - cc) * wy);
                        gv += g * ((cc - a) * (1 - wx) + (d - b) * wx);
                        if (reference->requires_grad) {
                            reference->grad[c * plane + y0 * W + x0] += g * (1 - wy) * (1 - wx);
                            reference->grad[c * plane + y0 * W + x1] += g * (1 - wy) * wx;
                            reference->grad[c * plane + y1 * W + x0] += g * wy * (1 - wx);
                            reference->grad[c * plane + y1 * W + x1] += g * wy * wx;
                        }
                    }
                    if (gu == 0.0f && gv == 0.0f) continue;

                    // Projection Jacobian rows w.r.t. Y.
                    float Ju[3] = {fx / Y2, 0.0f, -fx * Y0 / (Y2 * Y2)};
                    float Jv[3] = {0.0f, fy / Y2, -fy * Y1 / (Y2 * Y2)};
                    auto chain_Y = [&](const float dY[3]) {
                        return gu * (Ju[0] * dY[0] + Ju[1] * dY[1] + Ju[2] * dY[2]) +
                               gv * (Jv[0] * dY[0] + Jv[1] * dY[1] + Jv[2] * dY[2]);
                    };

                    if (depth->requires_grad) {
                        // X scales linearly with z, so dY/dz = R X / z.
                        float dY[3] = {(Y0 - tx) / z, (Y1 - ty) / z, (Y2 - tz) / z};
                        depth->grad[idx] += chain_Y(dY);
                    }
                    if (cam_vec->requires_grad) {
                        for (int i = 0; i < 3; ++i) {
                            float dY[3] = {
                                static_cast<float>(Jr[i][0] * X0 + Jr[i][1] * X1 + Jr[i][2] * z),
                                static_cast<float>(Jr[i][3] * X0 + Jr[i][4] * X1 + Jr[i][5] * z),
                                static_cast<float>(Jr[i][6] * X0 + Jr[i][7] * X1 + Jr[i][8] * z)};
                            gcam[i] += chain_Y(dY);
                        }
                        float e0[3] = {1, 0, 0}, e1[3] = {0, 1, 0}, e2[3] = {0, 0, 1};
                        gcam[3] += chain_Y(e0);
                        gcam[4] += chain_Y(e1);
                        gcam[5] += chain_Y(e2);
                        // fx: back-projection and re-projection both depend on it.
                        {
                            float dX0 = -z * (u - cx) / (fx * fx);
                            float dY[3] = {R[0] * dX0, R[3] * dX0, R[6] * dX0};
                            gcam[6] += chain_Y(dY) + gu * (Y0 / Y2);
                        }
                        {
                            float dX1 = -z * (v - cy) / (fy * fy);
                            float dY[3] = {R[1] * dX1, R[4] * dX1, R[7] * dX1};
                            gcam[7] += chain_Y(dY) + gv * (Y1 / Y2);
                        }
                        {
                            float dX0 = -z / fx;
                            float dY[3] = {R[0] * dX0, R[3] * dX0, R[6] * dX0};
                            gcam[8] += chain_Y(dY) + gu;
                        }
                        {
                            float dX1 = -z / fy;
                            float dY[3] = {R[1] * dX1, R[4] * dX1, R[7] * dX1};
                            gcam[9] += chain_Y(dY) + gv;
                        }
                    }
                }
            }
            if (cam_vec->requires_grad)
                for (int i = 0; i < 10; ++i) cam_vec->grad[i] += static_cast<float>(gcam[i]);
        });
    }
    return {out, mask};
}

TensorPtr disparity_to_depth(Tape& tape, const TensorPtr& disparity, float focal,
                             float baseline) {
    for (float d : disparity->data)
        if (!(d > 0.0f))
            throw std::invalid_argument("disparity_to_depth: disparity entries must be positive");
    return divide(tape, scalar(focal * baseline), disparity);
}

}  // namespace cdepth
