#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "cdepth/replay.hpp"

using namespace cdepth;

namespace {

ReplaySample sample_with_domain(int domain, float d = 2.0f, long step = 0) {
    ReplaySample s;
    s.frame_a = constant({1, 1, 1, 1}, static_cast<float>(domain));
    s.frame_b = constant({1, 1, 1, 1}, static_cast<float>(domain));
    s.source_domain = domain;
    s.admitted_step = step;
    s.admitted_d = d;
    return s;
}

}  // namespace

TEST_CASE("admission threshold is strict D > 1") {
    ReplayBuffer buf(8, 1, 2);
    CHECK(!buf.maybe_store(sample_with_domain(0), 0.5f));
    CHECK(buf.size() == 0);
    CHECK(!buf.maybe_store(sample_with_domain(0), 1.0f));
    CHECK(buf.size() == 0);
    CHECK(buf.maybe_store(sample_with_domain(0), 2.0f));
    CHECK(buf.size() == 1);
}

TEST_CASE("a full buffer replaces instead of growing") {
    const std::size_t cap = 4;
    ReplayBuffer buf(cap, 3, 4);
    for (int i = 0; i < 10; ++i) buf.maybe_store(sample_with_domain(i), 2.0f);
    CHECK(buf.size() == cap);
}

TEST_CASE("capacity is never exceeded over many mixed operations") {
    const std::size_t cap = 16;
    ReplayBuffer buf(cap, 5, 6);
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100000; ++i) {
        float d = (rng() % 100) / 25.0f;  // D in [0, 4)
        buf.maybe_store(sample_with_domain(i % 7, d, i), d);
        CHECK(buf.size() <= cap);
        if (!buf.empty() && i % 3 == 0) {
            std::size_t before = buf.size();
            buf.draw();
            CHECK(buf.size() == before);  // draws never change size
        }
    }
    // admission audit: every stored item passed the threshold
    for (const auto& item : buf.items()) CHECK(item.admitted_d > 1.0f);
}

TEST_CASE("a single-item buffer always draws that item") {
    ReplayBuffer buf(4, 9, 10);
    buf.maybe_store(sample_with_domain(42), 3.0f);
    for (int i = 0; i < 20; ++i) CHECK(buf.draw().source_domain == 42);
}

TEST_CASE("draws from a 4-item buffer are uniform within 3 sigma") {
    ReplayBuffer buf(4, 11, 12);
    for (int i = 0; i < 4; ++i) buf.maybe_store(sample_with_domain(i), 2.0f);
    const int n = 10000;
    std::map<int, int> counts;
    for (int i = 0; i < n; ++i) counts[buf.draw().source_domain] += 1;
    const double p = 0.25;
    const double sigma = std::sqrt(p * (1.0 - p) / n);
    for (int i = 0; i < 4; ++i) {
        double freq = counts[i] / static_cast<double>(n);
        CHECK(std::fabs(freq - p) <= 3.0 * sigma);
    }
}

TEST_CASE("source coin: empty buffer is always online, otherwise fair") {
    ReplayBuffer empty(4, 13, 14);
    for (int i = 0; i < 100; ++i) CHECK(empty.choose_source() == StepSource::online);

    ReplayBuffer buf(4, 15, 16);
    buf.maybe_store(sample_with_domain(0), 2.0f);
    const int n = 10000;
    int replay = 0;
    for (int i = 0; i < n; ++i)
        if (buf.choose_source() == StepSource::replay) ++replay;
    double frac = replay / static_cast<double>(n);
    CHECK(frac == doctest::Approx(0.5).epsilon(0.04));  // 0.5 +- 0.02
}

TEST_CASE("identical seeds give identical decision sequences") {
    auto run = [] {
        ReplayBuffer buf(8, 21, 22);
        std::vector<int> log;
        for (int i = 0; i < 500; ++i) {
            buf.maybe_store(sample_with_domain(i % 5, 1.5f + (i % 3), i), 1.5f + (i % 3));
            log.push_back(buf.choose_source() == StepSource::replay ? 1 : 0);
            log.push_back(buf.draw().source_domain);
        }
        return log;
    };
    CHECK(run() == run());
}

TEST_CASE("rng state round-trips through the string form") {
    ReplayBuffer a(8, 31, 32);
    for (int i = 0; i < 5; ++i) a.maybe_store(sample_with_domain(i), 2.0f);
    for (int i = 0; i < 17; ++i) {
        a.draw();
        a.choose_source();
    }
    ReplayBuffer b(8, 0, 0);
    for (int i = 0; i < 5; ++i) b.restore(sample_with_domain(i));
    b.set_rng_state(a.rng_state());
    for (int i = 0; i < 50; ++i) {
        CHECK(a.draw().source_domain == b.draw().source_domain);
        CHECK(a.choose_source() == b.choose_source());
    }
}
