// Allocation accounting for activation tensors. Every Tensor registers its
// payload bytes here, so a scoped probe can report the peak working set of an
// executor without heap instrumentation.
#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>

namespace streamconv::mem {

struct Counters {
    std::atomic<std::int64_t> current{0};
    std::atomic<std::int64_t> peak{0};
};

inline Counters& counters() {
    static Counters c;
    return c;
}

inline void on_alloc(std::size_t bytes) {
    auto& c = counters();
    std::int64_t now = c.current.fetch_add(static_cast<std::int64_t>(bytes)) +
                       static_cast<std::int64_t>(bytes);
    std::int64_t prev = c.peak.load();
    while (now > prev && !c.peak.compare_exchange_weak(prev, now)) {
    }
}

inline void on_free(std::size_t bytes) {
    counters().current.fetch_sub(static_cast<std::int64_t>(bytes));
}

inline std::int64_t current_bytes() { return counters().current.load(); }

// Measures the peak tensor footprint between construction and peak_bytes(),
// relative to the baseline at construction. Not reentrant across threads.
class ScopedPeak {
public:
    ScopedPeak() : baseline_(counters().current.load()) {
        counters().peak.store(baseline_);
    }
    std::int64_t peak_bytes() const {
        std::int64_t p = counters().peak.load();
        return p > baseline_ ? p - baseline_ : 0;
    }

private:
    std::int64_t baseline_;
};

}  // namespace streamconv::mem
