#include "cdepth/worlds.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace cdepth {

namespace {

constexpr double kTau = 6.283185307179586;

struct TexLayer {
    float z = 1.0f;            // world depth of the fronto-parallel plane
    bool background = false;
    // extents; pixel units of the canonical left view for stereo,
    // world units on the plane for SfM
    float x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    // single oriented sinusoid per layer, per-channel phase
    float freq_x = 0, freq_y = 0;
    std::array<float, 3> base{0.5f, 0.5f, 0.5f};
    std::array<float, 3> phase{0, 0, 0};
    std::array<float, 3> contrast{0.3f, 0.3f, 0.3f};
    int disparity_px = 0;  // stereo: exact integer shift
};

float tex_eval(const TexLayer& l, float x, float y, int c) {
    return l.base[c] +
           l.contrast[c] * static_cast<float>(std::sin(kTau * (l.freq_x * x + l.freq_y * y) +
                                                       l.phase[c]));
}

// Scene layout drawn deterministically from the spec; object positions
// drift slowly with the frame index so consecutive frames are correlated
// but not identical.
std::vector<TexLayer> build_layers(const DomainSpec& spec, int idx, SampleMode mode) {
    // stereo scenes re-draw their layout every frame: no frame (in
    // particular no held-out evaluation frame) can be predicted by
    // memorizing another one
    const int window = mode == SampleMode::stereo ? idx : 0;
    const int t_loc = mode == SampleMode::stereo ? 0 : idx;
    std::mt19937_64 rng(spec.seed * 2654435761u + 0x9e3779b97f4a7c15ull +
                        static_cast<std::uint64_t>(window) * 0xd1342543de82ef95ull);
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);

    const float fb = spec.focal * spec.baseline;
    auto make_depth = [&](float frac) {
        float z = spec.z_near + frac * (spec.z_far - spec.z_near);
        if (mode == SampleMode::stereo) {
            // quantize so the stereo shift is an exact pixel count
            int d = std::max(1, static_cast<int>(std::lround(fb / z)));
            z = fb / static_cast<float>(d);
        }
        return z;
    };

    std::vector<TexLayer> layers;
    auto fill_texture = [&](TexLayer& l) {
        float freq;
        if (mode == SampleMode::stereo) {
            l.disparity_px = std::max(1, static_cast<int>(std::lround(fb / l.z)));
            // texture wavelength is a function of the layer's disparity,
            // the same in every domain, so images carry a globally
            // consistent monocular depth cue. The constant 1.13 ratio per
            // disparity step and the ±4% per-layer jitter are chosen so
            // adjacent disparities are partially confusable (a floor shared
            // by every method) while non-adjacent ones never overlap. The
            // shortest wavelength still exceeds the representable disparity
            // span, so the photometric loss has no wrap-around minima.
            float jitter = 0.96f + 0.08f * uni(rng);
            float wl = 6.0f * std::pow(static_cast<float>(l.disparity_px), 0.3f) * jitter;
            freq = 1.0f / wl;
        } else {
            freq = spec.freq_lo + uni(rng) * (spec.freq_hi - spec.freq_lo);
            // texture lives on the plane in world units; keep the
            // projected frequency inside the band at the layer's depth
            freq *= spec.focal / l.z;
        }
        // stereo textures stay within 30 degrees of vertical stripes:
        // horizontal gradients carry the disparity signal
        float theta = mode == SampleMode::stereo
                          ? (uni(rng) - 0.5f) * static_cast<float>(kTau) / 6.0f
                          : uni(rng) * static_cast<float>(kTau);
        l.freq_x = freq * std::cos(theta);
        l.freq_y = freq * std::sin(theta);
        for (int c = 0; c < 3; ++c) {
            // the palette shifts texture energy between channels: each
            // channel's amplitude is scaled by how close its hue anchor
            // (c/3) is to the domain's palette coordinate
            float g = 0.5f * (1.0f + static_cast<float>(std::cos(
                                         kTau * (spec.palette - c / 3.0f))));
            l.contrast[c] = spec.contrast * (0.15f + 0.85f * g);
            float lo = spec.contrast + 0.02f, hi = 0.98f - spec.contrast;
            l.base[c] = lo + uni(rng) * (hi - lo);
            l.phase[c] = uni(rng) * static_cast<float>(kTau);
        }
    };

    TexLayer bg;
    bg.background = true;
    bg.z = make_depth(0.95f);
    fill_texture(bg);
    // texture drifts slowly over the frame index
    bg.phase[0] += 0.003f * t_loc;
    bg.phase[1] += 0.003f * t_loc;
    bg.phase[2] += 0.003f * t_loc;
    layers.push_back(bg);

    for (int k = 0; k < spec.object_count; ++k) {
        TexLayer l;
        l.z = make_depth(0.1f + 0.7f * uni(rng));
        fill_texture(l);
        float scale = (mode == SampleMode::stereo)
                          ? 1.0f
                          : l.z / spec.focal;  // px -> world units at the plane
        float hw = (0.10f + 0.12f * uni(rng)) * spec.width * scale;
        float hh = (0.10f + 0.12f * uni(rng)) * spec.height * scale;
        float span_x = spec.width * scale, span_y = spec.height * scale;
        float drift = (0.02f + 0.05f * uni(rng)) * (uni(rng) < 0.5f ? -1.0f : 1.0f) * scale;
        float cx0 = uni(rng) * span_x;
        float cy = (0.15f + 0.7f * uni(rng)) * span_y;
        float cx = std::fmod(cx0 + drift * t_loc + 10.0f * span_x, span_x);
        float off_x = (mode == SampleMode::sfm) ? -span_x / 2 : 0.0f;
        float off_y = (mode == SampleMode::sfm) ? -span_y / 2 : 0.0f;
        l.x0 = cx - hw + off_x;
        l.x1 = cx + hw + off_x;
        l.y0 = cy - hh + off_y;
        l.y1 = cy + hh + off_y;
        layers.push_back(l);
    }
    // nearest layers take precedence; sort once, scan in order
    std::sort(layers.begin() + 1, layers.end(),
              [](const TexLayer& a, const TexLayer& b) { return a.z < b.z; });
    return layers;
}

bool covers(const TexLayer& l, float x, float y) {
    if (l.background) return true;
    return x >= l.x0 && x <= l.x1 && y >= l.y0 && y <= l.y1;
}

// Index of the nearest layer covering (x, y); layers[0] is the
// background, objects are sorted by depth.
int visible_layer(const std::vector<TexLayer>& layers, float x, float y) {
    int best = 0;
    float best_z = layers[0].z;
    for (std::size_t k = 1; k < layers.size(); ++k) {
        if (layers[k].z < best_z && covers(layers[k], x, y)) {
            best = static_cast<int>(k);
            best_z = layers[k].z;
        }
    }
    return best;
}

}  // namespace

int StreamPlan::total_frames() const {
    int n = 0;
    for (const auto& b : blocks) n += b.frame_count;
    return n;
}

LabeledSample render_stereo(const DomainSpec& spec, int idx) {
    if (idx < 0) throw std::invalid_argument("render_stereo: frame index must be >= 0");
    const int W = spec.width, H = spec.height;
    auto layers = build_layers(spec, idx, SampleMode::stereo);

    LabeledSample s;
    s.mode = SampleMode::stereo;
    s.frame_a = make_tensor({1, 3, H, W});
    s.frame_b = make_tensor({1, 3, H, W});
    s.gt_disparity = make_tensor({1, 1, H, W});
    s.gt_depth = make_tensor({1, 1, H, W});
    s.gt_valid = make_tensor({1, 1, H, W});
    s.domain_id = spec.domain_id;
    s.distribution_id = spec.distribution_id;
    s.focal = spec.focal;
    s.baseline = spec.baseline;

    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            std::size_t i = static_cast<std::size_t>(y) * W + x;
            // left view: layers live in left-image coordinates
            int kl = visible_layer(layers, static_cast<float>(x), static_cast<float>(y));
            for (int c = 0; c < 3; ++c)
                s.frame_a->data[c * plane + i] =
                    tex_eval(layers[kl], static_cast<float>(x), static_cast<float>(y), c);

            // right view: layer k covers right pixel x iff it covers left
            // coordinate x + d_k
            int kr = 0;
            float kr_z = layers[0].z;
            for (std::size_t k = 1; k < layers.size(); ++k) {
                float lx = static_cast<float>(x + layers[k].disparity_px);
                if (layers[k].z < kr_z && covers(layers[k], lx, static_cast<float>(y))) {
                    kr = static_cast<int>(k);
                    kr_z = layers[k].z;
                }
            }
            int d = layers[kr].disparity_px;
            float lx = static_cast<float>(x + d);
            for (int c = 0; c < 3; ++c)
                s.frame_b->data[c * plane + i] = tex_eval(layers[kr], lx, static_cast<float>(y), c);
            s.gt_disparity->data[i] = static_cast<float>(d);
            s.gt_depth->data[i] = spec.focal * spec.baseline / static_cast<float>(d);
            // occluded or looking outside the left frame -> invalid
            bool valid = lx >= 0.0f && lx <= W - 1 &&
                         visible_layer(layers, lx, static_cast<float>(y)) == kr;
            s.gt_valid->data[i] = valid ? 1.0f : 0.0f;
        }
    }
    return s;
}

namespace {

struct View {
    TensorPtr image;           // 1 x 3 x H x W
    TensorPtr depth;           // camera-frame depth along the ray
    std::vector<int> layer_id; // per pixel
};

View render_view(const DomainSpec& spec, const std::vector<TexLayer>& layers,
                 const std::array<float, 3>& cam_pos, const std::array<float, 9>& R) {
    const int W = spec.width, H = spec.height;
    const float f = spec.focal;
    const float cx = W / 2.0f, cy = H / 2.0f;
    View view;
    view.image = make_tensor({1, 3, H, W});
    view.depth = make_tensor({1, 1, H, W});
    view.layer_id.assign(static_cast<std::size_t>(H) * W, 0);
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    for (int v = 0; v < H; ++v) {
        for (int u = 0; u < W; ++u) {
            std::size_t i = static_cast<std::size_t>(v) * W + u;
            float dc[3] = {(u - cx) / f, (v - cy) / f, 1.0f};
            float dw[3] = {R[0] * dc[0] + R[1] * dc[1] + R[2] * dc[2],
                           R[3] * dc[0] + R[4] * dc[1] + R[5] * dc[2],
                           R[6] * dc[0] + R[7] * dc[1] + R[8] * dc[2]};
            int best = -1;
            float best_s = 0.0f;
            float hit_x = 0.0f, hit_y = 0.0f;
            for (std::size_t k = 0; k < layers.size(); ++k) {
                if (dw[2] <= 1e-6f) break;
                float sray = (layers[k].z - cam_pos[2]) / dw[2];
                if (sray <= 1e-4f) continue;
                float px = cam_pos[0] + sray * dw[0];
                float py = cam_pos[1] + sray * dw[1];
                if (!covers(layers[k], px, py)) continue;
                if (best < 0 || sray < best_s) {
                    best = static_cast<int>(k);
                    best_s = sray;
                    hit_x = px;
                    hit_y = py;
                }
            }
            if (best < 0) {
                // ray escaped the scene; paint background color, flag far
                view.depth->data[i] = layers[0].z;
                continue;
            }
            view.layer_id[i] = best;
            view.depth->data[i] = best_s * dc[2];  // camera-frame z (dc z == 1)
            for (int c = 0; c < 3; ++c)
                view.image->data[c * plane + i] = tex_eval(layers[best], hit_x, hit_y, c);
        }
    }
    return view;
}

}  // namespace

LabeledSample render_sequence(const DomainSpec& spec, int t) {
    if (t < 1) throw std::invalid_argument("render_sequence: frame index must be >= 1");
    const int W = spec.width, H = spec.height;
    auto layers = build_layers(spec, 0, SampleMode::sfm);

    auto pose_at = [&](int frame) {
        std::array<float, 3> pos = {spec.cam_vel[0] * frame, spec.cam_vel[1] * frame,
                                    spec.cam_vel[2] * frame};
        std::array<float, 3> rot = {spec.cam_rot_vel[0] * frame, spec.cam_rot_vel[1] * frame,
                                    spec.cam_rot_vel[2] * frame};
        return std::make_pair(pos, rot);
    };

    auto [pos_ref, rot_ref] = pose_at(t - 1);
    auto [pos_tar, rot_tar] = pose_at(t);
    auto R_ref = rotation_matrix(rot_ref);
    auto R_tar = rotation_matrix(rot_tar);

    View ref = render_view(spec, layers, pos_ref, R_ref);
    View tar = render_view(spec, layers, pos_tar, R_tar);

    LabeledSample s;
    s.mode = SampleMode::sfm;
    s.frame_a = tar.image;
    s.frame_b = ref.image;
    s.gt_depth = tar.depth;
    s.gt_valid = make_tensor({1, 1, H, W});
    s.domain_id = spec.domain_id;
    s.distribution_id = spec.distribution_id;
    s.focal = spec.focal;

    // relative transform: X_ref = R_rel X_tar + t_rel
    CameraParams cam;
    cam.fx = cam.fy = spec.focal;
    cam.cx = W / 2.0f;
    cam.cy = H / 2.0f;
    // motion is a per-frame increment about a fixed axis, so the relative
    // rotation is one increment
    cam.rotation = spec.cam_rot_vel;
    float dp[3] = {pos_tar[0] - pos_ref[0], pos_tar[1] - pos_ref[1], pos_tar[2] - pos_ref[2]};
    cam.translation = {R_ref[0] * dp[0] + R_ref[3] * dp[1] + R_ref[6] * dp[2],
                       R_ref[1] * dp[0] + R_ref[4] * dp[1] + R_ref[7] * dp[2],
                       R_ref[2] * dp[0] + R_ref[5] * dp[1] + R_ref[8] * dp[2]};
    s.gt_cam = cam;

    // validity: the reprojected footprint in the reference view must land
    // in bounds and stay on the same surface
    auto Rrel = rotation_matrix(cam.rotation);
    for (int v = 0; v < H; ++v) {
        for (int u = 0; u < W; ++u) {
            std::size_t i = static_cast<std::size_t>(v) * W + u;
            float z = tar.depth->data[i];
            float X0 = z * (u - cam.cx) / cam.fx;
            float X1 = z * (v - cam.cy) / cam.fy;
            float Y0 = Rrel[0] * X0 + Rrel[1] * X1 + Rrel[2] * z + cam.translation[0];
            float Y1 = Rrel[3] * X0 + Rrel[4] * X1 + Rrel[5] * z + cam.translation[1];
            float Y2 = Rrel[6] * X0 + Rrel[7] * X1 + Rrel[8] * z + cam.translation[2];
            if (Y2 <= 1e-6f) continue;
            float pu = cam.fx * Y0 / Y2 + cam.cx;
            float pv = cam.fy * Y1 / Y2 + cam.cy;
            if (pu < 0.0f || pu > W - 1 || pv < 0.0f || pv > H - 1) continue;
            int x0 = static_cast<int>(std::floor(pu));
            int y0 = static_cast<int>(std::floor(pv));
            int x1 = std::min(x0 + 1, W - 1);
            int y1 = std::min(y0 + 1, H - 1);
            int want = tar.layer_id[i];
            bool same = ref.layer_id[y0 * W + x0] == want && ref.layer_id[y0 * W + x1] == want &&
                        ref.layer_id[y1 * W + x0] == want && ref.layer_id[y1 * W + x1] == want;
            s.gt_valid->data[i] = same ? 1.0f : 0.0f;
        }
    }
    return s;
}

LabeledSample render_sample(SampleMode mode, const DomainSpec& spec, int idx) {
    return mode == SampleMode::stereo ? render_stereo(spec, idx)
                                      : render_sequence(spec, std::max(idx, 1));
}

Benchmark make_benchmark(std::uint64_t seed, const BenchmarkOptions& opts) {
    const int n_dom = opts.domains_per_distribution;
    if (n_dom < 2) throw std::invalid_argument("make_benchmark: need at least 2 domains per distribution");
    Benchmark bench;
    bench.pretrain.phase = StreamPhase::pretrain;
    bench.online.phase = StreamPhase::online;

    const int train_frames = opts.frames_per_domain * 9 / 10;
    const int eval_avail = opts.frames_per_domain - train_frames;
    const int eval_count = std::min(opts.eval_frames_per_domain, eval_avail);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);

    auto make_spec = [&](int dist, int local_idx) {
        DomainSpec d;
        d.distribution_id = dist;
        d.domain_id = dist * n_dom + local_idx;
        d.width = opts.width;
        d.height = opts.height;
        d.focal = static_cast<float>(opts.width);
        d.seed = seed * 1000003ull + static_cast<std::uint64_t>(d.domain_id) * 7919ull + 17ull;
        d.object_count = 4 + static_cast<int>(uni(rng) * 3.0f);
        // Domains inside a distribution occupy disjoint depth and texture
        // sub-bands. Depth bands are geometric, so each one maps to a
        // distinct disparity regime. Band assignment is interleaved: the
        // pretraining half takes the even bands, the online half the odd
        // ones, so every online domain transition lands in a disparity
        // regime well separated from the one just fitted.
        // the online half brackets the full regime range (its bands cover
        // both extremes and the middle) so rehearsal of the online stream
        // pins the whole cue map; the pretraining half sits in between
        const int half_dom = n_dom / 2;
        int band;
        if (n_dom == 6) {
            // the two distributions mix the regimes differently: the first
            // sits entirely in the low regime, which the second only passes
            // through at the start of its online tail before moving on
            constexpr int kBands0[6] = {3, 3, 3, 3, 3, 3};
            constexpr int kBands1[6] = {2, 2, 2, 3, 4, 4};
            band = dist == 0 ? kBands0[local_idx] : kBands1[local_idx];
            // appearance axis: the first distribution lives in one palette
            // family; the second starts near it, then its online tail moves
            // far away, so a stream ending there has seen nothing in the
            // first family for a long time
            if (dist == 0) {
                d.palette = 0.12f + 0.06f * uni(rng);
            } else {
                constexpr float kPal[6] = {0.45f, 0.48f, 0.51f,
                                           0.15f, 0.85f, 0.88f};
                d.palette = kPal[local_idx];
            }
        } else if (n_dom % 2 == 0) {
            band = local_idx < half_dom ? 2 * local_idx : 2 * (local_idx - half_dom) + 1;
        } else {
            band = local_idx;
        }
        const float t = n_dom > 1 ? static_cast<float>(band) / (n_dom - 1) : 0.0f;
        float wl_a, wl_b, z_a, z_b, fb_px;
        if (dist == 0) {
            // near scenes, finer texture
            z_a = 2.0f;
            z_b = 16.0f;
            fb_px = 16.0f;
            d.contrast = 0.45f;
            if (opts.mode == SampleMode::stereo) {
                // wavelengths exceed the disparity range so the photometric
                // loss has no wrap-around ambiguity
                wl_a = 9.0f;
                wl_b = 21.0f;
            } else {
                wl_a = 48.0f;
                wl_b = 72.0f;
            }
        } else {
            // far scenes, coarser texture
            z_a = 8.0f;
            z_b = 64.0f;
            fb_px = 64.0f;
            d.contrast = 0.45f;
            if (opts.mode == SampleMode::stereo) {
                wl_a = 10.0f;
                wl_b = 20.0f;
            } else {
                wl_a = 80.0f;
                wl_b = 128.0f;
            }
        }
        d.baseline = fb_px / d.focal;
        const float wl_width = (wl_b - wl_a) / static_cast<float>(n_dom);
        const float wl_lo = wl_a + t * (wl_b - wl_a - wl_width);
        d.freq_hi = 1.0f / wl_lo;
        d.freq_lo = 1.0f / (wl_lo + wl_width);
        if (opts.mode == SampleMode::stereo) {
            // each domain spans two integer disparities; the spans slide
            // across the range so consecutive online domains occupy shifted
            // regimes while no single domain is a constant task
            const int d_lo = 1 + band;
            const int d_hi = d_lo + 1;
            d.z_near = fb_px / static_cast<float>(d_hi);
            d.z_far = fb_px / static_cast<float>(d_lo);
        } else {
            const float z_ratio = std::pow(z_b / z_a, 1.0f / static_cast<float>(n_dom));
            d.z_near = z_a * std::pow(z_ratio, static_cast<float>(band));
            d.z_far = d.z_near * z_ratio;
        }
        if (opts.mode == SampleMode::sfm) {
            float z_mid = 0.5f * (d.z_near + d.z_far);
            float px_per_frame = 0.5f + uni(rng);
            d.cam_vel = {px_per_frame * z_mid / d.focal, 0.0f, 0.0f};
            if (uni(rng) < 0.5f) d.cam_vel[1] = 0.3f * d.cam_vel[0];
            d.cam_rot_vel = {0.0f, 0.0f, uni(rng) < 0.5f ? 0.001f : 0.0f};
        }
        return d;
    };

    const int half = n_dom / 2;
    for (int dist = 0; dist < 2; ++dist) {
        for (int k = 0; k < n_dom; ++k) {
            DomainSpec spec = make_spec(dist, k);
            bool pretrain_domain = k < half;
            StreamBlock block{spec, 0, train_frames};
            if (pretrain_domain)
                bench.pretrain.blocks.push_back(block);
            else if (dist == opts.online_distribution)
                bench.online.blocks.push_back(block);
            // held-out tail, identical range whether or not the domain is
            // ever trained on
            EvalSet es;
            es.spec = spec;
            for (int e = 0; e < eval_count; ++e) es.frame_indices.push_back(train_frames + e);
            bench.eval_sets.push_back(es);
        }
    }
    return bench;
}

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.shape.size() != 4 || image.shape[1] != 3)
        throw std::invalid_argument("write_ppm: expected 1 x 3 x H x W image");
    const int H = image.shape[2], W = image.shape[3];
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_ppm: cannot open " + path);
    os << "P6\n" << W << " " << H << "\n255\n";
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) {
            float v = image.data[c * plane + i];
            int q = static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
            os.put(static_cast<char>(q));
        }
    }
}

void write_pfm(const std::string& path, const Tensor& map) {
    if (map.shape.size() != 4 || map.shape[1] != 1)
        throw std::invalid_argument("write_pfm: expected 1 x 1 x H x W map");
    const int H = map.shape[2], W = map.shape[3];
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_pfm: cannot open " + path);
    // negative scale marks little-endian
    os << "Pf\n" << W << " " << H << "\n-1.0\n";
    os.write(reinterpret_cast<const char*>(map.data.data()),
             static_cast<std::streamsize>(map.data.size() * sizeof(float)));
}

}  // namespace cdepth
