#pragma once

#include <cmath>
#include <limits>
#include <span>

namespace emm {

/// log(sum_i w_i * exp(a_i)) for nonnegative weights, stable for large a.
inline double log_sum_exp(std::span<const double> log_terms) {
    double m = -std::numeric_limits<double>::infinity();
    for (double t : log_terms) m = std::max(m, t);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double t : log_terms) s += std::exp(t - m);
    return m + std::log(s);
}

/// Streaming accumulator for log(sum exp(a_i)).
class LogSumExp {
  public:
    void add(double log_term) {
        if (log_term == -std::numeric_limits<double>::infinity()) return;
        if (log_term > max_) {
            sum_ = sum_ * std::exp(max_ - log_term) + 1.0;
            max_ = log_term;
        } else {
            sum_ += std::exp(log_term - max_);
        }
    }
    double value() const {
        if (sum_ == 0.0) return -std::numeric_limits<double>::infinity();
        return max_ + std::log(sum_);
    }

  private:
    double max_ = -std::numeric_limits<double>::infinity();
    double sum_ = 0.0;
};

}  // namespace emm
