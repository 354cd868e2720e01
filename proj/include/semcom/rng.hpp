#pragma once

#include <cmath>
#include <cstdint>

namespace semcom {

// Counter-based splittable generator (splitmix64 core). Realizations are
// reproducible across platforms; fork() derives decorrelated per-frame or
// per-stream generators.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t nextU64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Derived generator for an independent stream.
    Rng fork(uint64_t stream) const {
        Rng r(state_ ^ (0x9e3779b97f4a7c15ULL * (stream + 0x632be59bd9b4e019ULL)));
        r.nextU64();
        return r;
    }

    // Uniform in [0,1).
    double uniform() { return static_cast<double>(nextU64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniformInt(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(nextU64() % static_cast<uint64_t>(hi - lo + 1));
    }

    // Standard normal via Box-Muller; caches the second draw.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    uint64_t state() const { return state_; }
    void setState(uint64_t s) {
        state_ = s;
        have_cached_ = false;
    }

    // Full snapshot including the cached Box-Muller draw, for bit-exact
    // checkpoint round trips.
    struct Snapshot {
        uint64_t state = 0;
        double cached = 0.0;
        bool have_cached = false;
    };
    Snapshot snapshot() const { return {state_, cached_, have_cached_}; }
    void restore(const Snapshot& s) {
        state_ = s.state;
        cached_ = s.cached;
        have_cached_ = s.have_cached;
    }

private:
    uint64_t state_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace semcom
