#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

namespace vbcm {

/// Neumaier-compensated accumulator. Order of add() calls fully determines
/// the result, so callers that need reproducibility must fix the order.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }

    CompensatedSum& operator+=(double x) noexcept {
        add(x);
        return *this;
    }

    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Number of worker threads to use when the caller passes 0: the
/// VBCM_THREADS environment variable if set and positive, otherwise the
/// hardware concurrency (at least 1).
std::size_t default_thread_count();

/// Runs body(begin, end) over contiguous blocks of [0, n). Blocks are a pure
/// function of (n, threads); body must only write to disjoint outputs.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace vbcm
