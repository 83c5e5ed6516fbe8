#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cdepth/tensor.hpp"

namespace cdepth {

enum class SampleMode { stereo, sfm };

/// Stored training inputs only: a left/right pair for stereo, a
/// target/reference pair for SfM. No labels, no features. source_domain
/// is bookkeeping for evaluation and is never read by training.
struct ReplaySample {
    SampleMode mode = SampleMode::stereo;
    TensorPtr frame_a;  // left image, or target frame
    TensorPtr frame_b;  // right image, or reference frame
    int source_domain = -1;
    long admitted_step = -1;
    float admitted_d = 0.0f;
};

enum class StepSource { online, replay };

/// Fixed-capacity store with threshold admission (D > 1), uniform-random
/// eviction, and uniform draws.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::uint64_t seed, std::uint64_t coin_seed);

    /// Admits the sample iff D > 1; a full buffer replaces a uniformly
    /// random victim. Returns whether the sample was stored.
    bool maybe_store(ReplaySample sample, float d);

    /// Uniformly random item; the item stays in the buffer. Throws when
    /// empty (use choose_source first).
    const ReplaySample& draw();

    /// Fair coin between online and replay; always online when empty.
    StepSource choose_source();

    /// Re-inserts an item that already passed admission (state restore).
    void restore(ReplaySample sample);

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return items_.empty(); }
    const std::vector<ReplaySample>& items() const { return items_; }

    std::string rng_state() const;
    void set_rng_state(const std::string& s);

private:
    std::size_t capacity_;
    std::vector<ReplaySample> items_;
    std::mt19937_64 rng_;       // eviction and draws
    std::mt19937_64 coin_rng_;  // online-vs-replay decision
};

}  // namespace cdepth
