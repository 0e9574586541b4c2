#pragma once

#include <utility>
#include <vector>

#include "bsde/errors.hpp"

namespace bsde {

/// Strictly increasing time points t_0 = 0 < t_1 < ... < t_n = T.
/// Step k (1-based) is the interval ]t_{k-1}, t_k].
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2) throw Error("time grid needs at least two points");
    if (times_.front() != 0.0) throw Error("time grid must start at 0");
    for (std::size_t i = 1; i < times_.size(); ++i) {
      if (!(times_[i] > times_[i - 1])) throw Error("time grid must be strictly increasing");
    }
  }

  int steps() const { return static_cast<int>(times_.size()) - 1; }

  double time(int k) const {
    if (k < 0 || k >= static_cast<int>(times_.size()))
      throw IndexOutOfRange("grid index " + std::to_string(k));
    return times_[static_cast<std::size_t>(k)];
  }

  double horizon() const { return times_.back(); }
  double dt(int k) const { return time(k) - time(k - 1); }
  const std::vector<double>& times() const { return times_; }

  bool operator==(const TimeGrid&) const = default;

 private:
  std::vector<double> times_;
};

}  // namespace bsde
