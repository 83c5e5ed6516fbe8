#include "cdepth/replay.hpp"

#include <sstream>
#include <stdexcept>

#include "cdepth/boundary.hpp"

namespace cdepth {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed, std::uint64_t coin_seed)
    : capacity_(capacity), rng_(seed), coin_rng_(coin_seed) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    items_.reserve(capacity);
}

bool ReplayBuffer::maybe_store(ReplaySample sample, float d) {
    if (!is_boundary(d)) return false;
    if (items_.size() < capacity_) {
        items_.push_back(std::move(sample));
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
        items_[pick(rng_)] = std::move(sample);
    }
    return true;
}

const ReplaySample& ReplayBuffer::draw() {
    if (items_.empty()) throw std::runtime_error("ReplayBuffer::draw: buffer is empty");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    return items_[pick(rng_)];
}

StepSource ReplayBuffer::choose_source() {
    if (items_.empty()) return StepSource::online;
    std::uniform_int_distribution<int> coin(0, 1);
    return coin(coin_rng_) == 0 ? StepSource::online : StepSource::replay;
}

void ReplayBuffer::restore(ReplaySample sample) {
    if (items_.size() >= capacity_)
        throw std::runtime_error("ReplayBuffer::restore: buffer already full");
    items_.push_back(std::move(sample));
}

std::string ReplayBuffer::rng_state() const {
    std::ostringstream os;
    os << rng_ << '\n' << coin_rng_;
    return os.str();
}

void ReplayBuffer::set_rng_state(const std::string& s) {
    std::istringstream is(s);
    is >> rng_ >> coin_rng_;
    if (!is) throw std::runtime_error("ReplayBuffer: bad RNG state string");
}

}  // namespace cdepth
