#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "cdepth/warp.hpp"
#include "cdepth/worlds.hpp"

using namespace cdepth;

TEST_CASE("single plane has the pinhole disparity everywhere") {
    DomainSpec spec;
    spec.width = 32;
    spec.height = 24;
    spec.object_count = 1;
    spec.z_near = spec.z_far = 5.0f;
    spec.focal = 50.0f;
    spec.baseline = 1.0f;
    spec.seed = 3;
    auto s = render_stereo(spec, 0);
    for (float v : s.gt_disparity->data) CHECK(v == doctest::Approx(10.0f));
    for (float z : s.gt_depth->data) CHECK(z == doctest::Approx(5.0f));
}

TEST_CASE("ground-truth stereo warp reproduces the right frame to 1e-6") {
    DomainSpec spec;
    spec.width = 48;
    spec.height = 32;
    spec.object_count = 4;
    spec.z_near = 2.0f;
    spec.z_far = 8.0f;
    spec.focal = 48.0f;
    spec.baseline = 16.0f / 48.0f;
    spec.freq_lo = 1.0f / 12.0f;
    spec.freq_hi = 1.0f / 6.0f;
    spec.seed = 7;
    for (int idx : {0, 3, 11}) {
        auto s = render_stereo(spec, idx);
        Tape tape;
        auto w = warp_stereo(tape, s.frame_a, s.gt_disparity);
        double worst = 0.0;
        std::size_t checked = 0;
        const std::size_t plane = s.gt_valid->data.size();
        for (std::size_t i = 0; i < s.frame_b->data.size(); ++i) {
            if (s.gt_valid->data[i % plane] == 0.0f) continue;
            worst = std::max(worst,
                             std::fabs(static_cast<double>(w.reconstructed->data[i]) -
                                       s.frame_b->data[i]));
            ++checked;
        }
        CHECK(checked > plane / 2);  // most pixels are unoccluded
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("ground-truth sfm warp reproduces the target frame to 1e-3") {
    DomainSpec spec;
    spec.width = 48;
    spec.height = 32;
    spec.object_count = 4;
    spec.z_near = 10.0f;
    spec.z_far = 40.0f;
    spec.focal = 48.0f;
    spec.freq_lo = 1.0f / 96.0f;
    spec.freq_hi = 1.0f / 64.0f;
    spec.contrast = 0.3f;
    spec.cam_vel = {0.05f, 0.02f, 0.04f};
    spec.cam_rot_vel = {0.001f, -0.002f, 0.001f};
    spec.seed = 11;
    for (int t : {1, 5}) {
        auto s = render_sequence(spec, t);
        auto cam = s.gt_cam.to_vector();
        Tape tape;
        auto w = warp_sfm(tape, s.frame_b, s.gt_depth,
                          from_data({10}, std::vector<float>(cam.begin(), cam.end())));
        double worst = 0.0;
        std::size_t checked = 0;
        const std::size_t plane = s.gt_valid->data.size();
        for (std::size_t i = 0; i < s.frame_a->data.size(); ++i) {
            if (s.gt_valid->data[i % plane] == 0.0f || w.valid_mask->data[i % plane] == 0.0f)
                continue;
            worst = std::max(worst,
                             std::fabs(static_cast<double>(w.reconstructed->data[i]) -
                                       s.frame_a->data[i]));
            ++checked;
        }
        CHECK(checked > plane / 2);
        CHECK(worst <= 1e-3);
    }
}

TEST_CASE("zero camera motion gives identical frames and identity pose") {
    DomainSpec spec;
    spec.width = 32;
    spec.height = 24;
    spec.cam_vel = {0.0f, 0.0f, 0.0f};
    spec.cam_rot_vel = {0.0f, 0.0f, 0.0f};
    spec.seed = 13;
    auto s = render_sequence(spec, 4);
    CHECK(s.frame_a->data == s.frame_b->data);
    for (float r : s.gt_cam.rotation) CHECK(r == 0.0f);
    for (float t : s.gt_cam.translation) CHECK(t == doctest::Approx(0.0f));
}

TEST_CASE("rendering is deterministic per (spec, index)") {
    DomainSpec spec;
    spec.width = 32;
    spec.height = 24;
    spec.seed = 17;
    auto a = render_stereo(spec, 5);
    auto b = render_stereo(spec, 5);
    CHECK(a.frame_a->data == b.frame_a->data);
    CHECK(a.frame_b->data == b.frame_b->data);
    CHECK(a.gt_depth->data == b.gt_depth->data);

    spec.cam_vel = {0.05f, 0.0f, 0.0f};
    auto c = render_sequence(spec, 3);
    auto d = render_sequence(spec, 3);
    CHECK(c.frame_a->data == d.frame_a->data);
    CHECK(c.gt_depth->data == d.gt_depth->data);
}

TEST_CASE("benchmark phases split the domains cleanly") {
    BenchmarkOptions opts;
    opts.frames_per_domain = 100;
    opts.eval_frames_per_domain = 5;
    auto bench = make_benchmark(23, opts);

    std::set<int> pre_ids, online_ids;
    for (const auto& blk : bench.pretrain.blocks) pre_ids.insert(blk.spec.domain_id);
    for (const auto& blk : bench.online.blocks) online_ids.insert(blk.spec.domain_id);
    for (int id : online_ids) CHECK(pre_ids.count(id) == 0);  // no overlap

    // the online stream holds only the online distribution's remaining domains
    for (const auto& blk : bench.online.blocks)
        CHECK(blk.spec.distribution_id == opts.online_distribution);

    // every domain evaluates, and eval frames sit past the training range
    CHECK(bench.eval_sets.size() == 12);
    for (const auto& es : bench.eval_sets) {
        CHECK(es.frame_indices.size() == 5);
        for (const auto& plan : {bench.pretrain, bench.online}) {
            for (const auto& blk : plan.blocks) {
                if (blk.spec.domain_id != es.spec.domain_id) continue;
                for (int f : es.frame_indices)
                    CHECK(f >= blk.first_frame + blk.frame_count);
            }
        }
    }
}

TEST_CASE("online stream is block-contiguous by domain") {
    auto bench = make_benchmark(29);
    int prev = -1;
    for (const auto& blk : bench.online.blocks) {
        CHECK(blk.spec.domain_id != prev);  // one block per domain, in order
        CHECK(blk.frame_count > 0);
        prev = blk.spec.domain_id;
    }
}

TEST_CASE("the two distributions are separated in mean depth") {
    auto bench = make_benchmark(31);
    double mean_a = 0.0, mean_b = 0.0;
    int na = 0, nb = 0;
    for (const auto& es : bench.eval_sets) {
        auto s = render_stereo(es.spec, es.frame_indices[0]);
        double m = 0.0;
        for (float z : s.gt_depth->data) m += z;
        m /= s.gt_depth->data.size();
        if (es.spec.distribution_id == 0) {
            mean_a += m;
            ++na;
        } else {
            mean_b += m;
            ++nb;
        }
    }
    CHECK(na == 6);
    CHECK(nb == 6);
    CHECK(mean_a / na < mean_b / nb);
}
