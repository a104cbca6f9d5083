#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "switch_env.hpp"

namespace gvdn {

/// One joint timestep <S, A, R, S'> plus the done flags used for masking.
struct Transition {
    std::vector<Observation> obs;
    std::vector<Action> actions;
    std::vector<double> rewards;
    std::vector<Observation> next_obs;
    std::vector<bool> done_before;  // agent had already reached its goal when acting
    std::vector<bool> done_after;
    bool team_done_after = false;

    std::size_t num_agents() const { return obs.size(); }

    void validate() const {
        const std::size_t n = obs.size();
        if (actions.size() != n || rewards.size() != n || next_obs.size() != n || done_before.size() != n ||
            done_after.size() != n) {
            throw std::invalid_argument("transition arrays differ in length");
        }
        for (double r : rewards) {
            if (!std::isfinite(r)) throw std::invalid_argument("non-finite reward in transition");
        }
    }

    friend bool operator==(const Transition&, const Transition&) = default;
};

class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bounded FIFO ring of transitions; the oldest entry is overwritten when full.
class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
        storage_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return storage_.size(); }
    bool empty() const { return storage_.empty(); }

    void push(Transition t) {
        if (storage_.size() < capacity_) {
            storage_.push_back(std::move(t));
        } else {
            storage_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    /// i = 0 is the oldest stored transition.
    const Transition& at(std::size_t i) const {
        if (i >= storage_.size()) throw std::out_of_range("replay index out of range");
        return storage_[(head_ + i) % storage_.size()];
    }

    /// `count` uniform draws with replacement.
    template <class Rng>
    std::vector<std::reference_wrapper<const Transition>> sample(std::size_t count, Rng& rng) const {
        if (storage_.size() < count || storage_.empty()) {
            throw InsufficientData("replay memory holds " + std::to_string(storage_.size()) + " transitions, need " +
                                   std::to_string(count));
        }
        std::uniform_int_distribution<std::size_t> pick(0, storage_.size() - 1);
        std::vector<std::reference_wrapper<const Transition>> batch;
        batch.reserve(count);
        for (std::size_t k = 0; k < count; ++k) batch.emplace_back(storage_[pick(rng)]);
        return batch;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;  // position of the oldest entry once full
    std::vector<Transition> storage_;
};

}  // namespace gvdn
