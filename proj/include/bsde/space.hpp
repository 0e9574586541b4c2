#pragma once

#include <span>
#include <string>
#include <vector>

#include "bsde/grid.hpp"

namespace bsde {

/// Finite outcome set with strictly positive probabilities and a refining
/// partition sequence over the time grid.  partitions[0] is the trivial
/// partition and partitions[n] separates outcomes.
class FiniteFilteredSpace {
 public:
  FiniteFilteredSpace(std::vector<std::string> outcomes, std::vector<double> prob,
                      TimeGrid grid, std::vector<std::vector<std::vector<int>>> partitions);

  int n_outcomes() const { return static_cast<int>(outcomes_.size()); }
  int steps() const { return grid_.steps(); }
  const TimeGrid& grid() const { return grid_; }
  const std::vector<std::string>& outcomes() const { return outcomes_; }
  const std::vector<double>& prob() const { return prob_; }

  /// Cells of the partition at step k (members sorted by outcome index).
  const std::vector<std::vector<int>>& cells(int k) const;
  /// Index of the cell containing outcome omega at step k.
  int cell_of(int k, int omega) const;
  /// Child cells (at step k) of parent cell `parent` (at step k-1), k in 1..n.
  const std::vector<int>& children(int k, int parent) const;
  double cell_prob(int k, int cell) const;
  /// P(child | parent) for the children of `parent` at step k, same order as
  /// children(k, parent).
  const std::vector<double>& child_cond_prob(int k, int parent) const;
  /// Position of a step-k cell in its parent's child list.
  int child_slot(int k, int cell) const;

  bool same_shape(const FiniteFilteredSpace& other) const;

 private:
  std::vector<std::string> outcomes_;
  std::vector<double> prob_;
  TimeGrid grid_;
  std::vector<std::vector<std::vector<int>>> partitions_;

  std::vector<std::vector<int>> cell_of_;                 // [k][omega]
  std::vector<std::vector<double>> cell_prob_;            // [k][cell]
  std::vector<std::vector<std::vector<int>>> children_;   // [k-1][parent]
  std::vector<std::vector<std::vector<double>>> cond_prob_;  // [k-1][parent][slot]
  std::vector<std::vector<int>> child_slot_;              // [k-1][cell at k]
};

/// Adapted R^K valued process: values[k] holds n_outcomes * K doubles,
/// constant on the cells of partitions[k].
struct AdaptedProcess {
  int K = 1;
  std::vector<std::vector<double>> values;  // (n+1) x (n_outcomes*K)

  std::span<double> at(int k, int omega) {
    return std::span<double>(values[static_cast<std::size_t>(k)])
        .subspan(static_cast<std::size_t>(omega) * static_cast<std::size_t>(K),
                 static_cast<std::size_t>(K));
  }
  std::span<const double> at(int k, int omega) const {
    return std::span<const double>(values[static_cast<std::size_t>(k)])
        .subspan(static_cast<std::size_t>(omega) * static_cast<std::size_t>(K),
                 static_cast<std::size_t>(K));
  }
};

/// Predictable R^{K x d} valued process: values[k-1] holds
/// n_outcomes * K * d doubles (row-major K x d per outcome), constant on the
/// cells of partitions[k-1].
struct PredictableProcess {
  int K = 1;
  int d = 0;
  std::vector<std::vector<double>> values;  // n x (n_outcomes*K*d)

  std::span<double> at(int k, int omega) {
    const std::size_t block = static_cast<std::size_t>(K) * static_cast<std::size_t>(d);
    return std::span<double>(values[static_cast<std::size_t>(k - 1)])
        .subspan(static_cast<std::size_t>(omega) * block, block);
  }
  std::span<const double> at(int k, int omega) const {
    const std::size_t block = static_cast<std::size_t>(K) * static_cast<std::size_t>(d);
    return std::span<const double>(values[static_cast<std::size_t>(k - 1)])
        .subspan(static_cast<std::size_t>(omega) * block, block);
  }
};

AdaptedProcess make_adapted(const FiniteFilteredSpace& space, int K);
PredictableProcess make_predictable(const FiniteFilteredSpace& space, int K, int d);

/// E[X | F_k] for a per-outcome vector X (n_outcomes * K doubles).
std::vector<double> conditional_expectation(const FiniteFilteredSpace& space,
                                            std::span<const double> x, int K, int k);

bool is_cell_measurable(const FiniteFilteredSpace& space, std::span<const double> x, int K,
                        int k, double tol = 0.0);

/// E[max_k ||Y_k||^2].
double s2_norm_sq(const FiniteFilteredSpace& space, const AdaptedProcess& y);

}  // namespace bsde
