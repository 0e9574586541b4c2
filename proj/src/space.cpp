#include "bsde/space.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bsde/errors.hpp"

namespace bsde {

FiniteFilteredSpace::FiniteFilteredSpace(std::vector<std::string> outcomes,
                                         std::vector<double> prob, TimeGrid grid,
                                         std::vector<std::vector<std::vector<int>>> partitions)
    : outcomes_(std::move(outcomes)),
      prob_(std::move(prob)),
      grid_(std::move(grid)),
      partitions_(std::move(partitions)) {
  const int m = n_outcomes();
  const int n = grid_.steps();
  if (m < 1) throw Error("space needs at least one outcome");
  if (static_cast<int>(prob_.size()) != m) throw Error("one probability per outcome required");
  double total = 0.0;
  for (double p : prob_) {
    if (!(p > 0.0)) throw DegenerateCell("probabilities must be strictly positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw Error("probabilities must sum to 1");
  if (static_cast<int>(partitions_.size()) != n + 1)
    throw Error("one partition per grid point required");

  cell_of_.assign(static_cast<std::size_t>(n + 1), std::vector<int>(static_cast<std::size_t>(m), -1));
  cell_prob_.resize(static_cast<std::size_t>(n + 1));
  for (int k = 0; k <= n; ++k) {
    auto& part = partitions_[static_cast<std::size_t>(k)];
    for (auto& cell : part) std::sort(cell.begin(), cell.end());
    std::sort(part.begin(), part.end());
    cell_prob_[static_cast<std::size_t>(k)].assign(part.size(), 0.0);
    for (std::size_t c = 0; c < part.size(); ++c) {
      if (part[c].empty()) throw DegenerateCell("empty cell at step " + std::to_string(k));
      for (int omega : part[c]) {
        if (omega < 0 || omega >= m)
          throw Error("partition references unknown outcome " + std::to_string(omega));
        if (cell_of_[static_cast<std::size_t>(k)][static_cast<std::size_t>(omega)] != -1)
          throw Error("outcome appears in two cells at step " + std::to_string(k));
        cell_of_[static_cast<std::size_t>(k)][static_cast<std::size_t>(omega)] =
            static_cast<int>(c);
        cell_prob_[static_cast<std::size_t>(k)][c] += prob_[static_cast<std::size_t>(omega)];
      }
    }
    for (int omega = 0; omega < m; ++omega)
      if (cell_of_[static_cast<std::size_t>(k)][static_cast<std::size_t>(omega)] == -1)
        throw Error("outcome " + std::to_string(omega) + " missing from partition at step " +
                    std::to_string(k));
  }

  if (partitions_[0].size() != 1) throw Error("partition at step 0 must be trivial");
  for (const auto& cell : partitions_[static_cast<std::size_t>(n)])
    if (cell.size() != 1) throw Error("terminal partition must separate outcomes");

  children_.resize(static_cast<std::size_t>(n));
  cond_prob_.resize(static_cast<std::size_t>(n));
  child_slot_.resize(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    const auto& part = partitions_[static_cast<std::size_t>(k)];
    const auto n_parents = partitions_[static_cast<std::size_t>(k - 1)].size();
    children_[static_cast<std::size_t>(k - 1)].assign(n_parents, {});
    cond_prob_[static_cast<std::size_t>(k - 1)].assign(n_parents, {});
    child_slot_[static_cast<std::size_t>(k - 1)].assign(part.size(), -1);
    for (std::size_t c = 0; c < part.size(); ++c) {
      const int parent = cell_of_[static_cast<std::size_t>(k - 1)]
                                 [static_cast<std::size_t>(part[c][0])];
      for (int omega : part[c]) {
        if (cell_of_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(omega)] != parent)
          throw Error("partition at step " + std::to_string(k) +
                      " does not refine the previous one");
      }
      child_slot_[static_cast<std::size_t>(k - 1)][c] =
          static_cast<int>(children_[static_cast<std::size_t>(k - 1)]
                                    [static_cast<std::size_t>(parent)].size());
      children_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(parent)]
          .push_back(static_cast<int>(c));
      cond_prob_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(parent)]
          .push_back(cell_prob_[static_cast<std::size_t>(k)][c] /
                     cell_prob_[static_cast<std::size_t>(k - 1)]
                               [static_cast<std::size_t>(parent)]);
    }
  }
}

const std::vector<std::vector<int>>& FiniteFilteredSpace::cells(int k) const {
  if (k < 0 || k > steps()) throw IndexOutOfRange("step " + std::to_string(k));
  return partitions_[static_cast<std::size_t>(k)];
}

int FiniteFilteredSpace::cell_of(int k, int omega) const {
  if (k < 0 || k > steps()) throw IndexOutOfRange("step " + std::to_string(k));
  return cell_of_[static_cast<std::size_t>(k)][static_cast<std::size_t>(omega)];
}

const std::vector<int>& FiniteFilteredSpace::children(int k, int parent) const {
  if (k < 1 || k > steps()) throw IndexOutOfRange("step " + std::to_string(k));
  return children_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(parent)];
}

double FiniteFilteredSpace::cell_prob(int k, int cell) const {
  return cell_prob_[static_cast<std::size_t>(k)][static_cast<std::size_t>(cell)];
}

const std::vector<double>& FiniteFilteredSpace::child_cond_prob(int k, int parent) const {
  return cond_prob_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(parent)];
}

int FiniteFilteredSpace::child_slot(int k, int cell) const {
  return child_slot_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(cell)];
}

bool FiniteFilteredSpace::same_shape(const FiniteFilteredSpace& other) const {
  return outcomes_ == other.outcomes_ && prob_ == other.prob_ && grid_ == other.grid_ &&
         partitions_ == other.partitions_;
}

AdaptedProcess make_adapted(const FiniteFilteredSpace& space, int K) {
  AdaptedProcess p;
  p.K = K;
  p.values.assign(static_cast<std::size_t>(space.steps() + 1),
                  std::vector<double>(static_cast<std::size_t>(space.n_outcomes()) *
                                          static_cast<std::size_t>(K),
                                      0.0));
  return p;
}

PredictableProcess make_predictable(const FiniteFilteredSpace& space, int K, int d) {
  PredictableProcess p;
  p.K = K;
  p.d = d;
  p.values.assign(static_cast<std::size_t>(space.steps()),
                  std::vector<double>(static_cast<std::size_t>(space.n_outcomes()) *
                                          static_cast<std::size_t>(K) *
                                          static_cast<std::size_t>(d),
                                      0.0));
  return p;
}

std::vector<double> conditional_expectation(const FiniteFilteredSpace& space,
                                            std::span<const double> x, int K, int k) {
  if (k < 0 || k > space.steps()) throw IndexOutOfRange("step " + std::to_string(k));
  const int m = space.n_outcomes();
  if (static_cast<int>(x.size()) != m * K)
    throw Error("conditional_expectation: variable has wrong size");
  std::vector<double> out(static_cast<std::size_t>(m) * static_cast<std::size_t>(K), 0.0);
  const auto& cells = space.cells(k);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const double pc = space.cell_prob(k, static_cast<int>(c));
    for (int j = 0; j < K; ++j) {
      double acc = 0.0;
      for (int omega : cells[c])
        acc += space.prob()[static_cast<std::size_t>(omega)] *
               x[static_cast<std::size_t>(omega) * static_cast<std::size_t>(K) +
                 static_cast<std::size_t>(j)];
      const double v = acc / pc;
      for (int omega : cells[c])
        out[static_cast<std::size_t>(omega) * static_cast<std::size_t>(K) +
            static_cast<std::size_t>(j)] = v;
    }
  }
  return out;
}

bool is_cell_measurable(const FiniteFilteredSpace& space, std::span<const double> x, int K,
                        int k, double tol) {
  for (const auto& cell : space.cells(k)) {
    const int rep = cell[0];
    for (int omega : cell) {
      for (int j = 0; j < K; ++j) {
        const double a = x[static_cast<std::size_t>(rep) * static_cast<std::size_t>(K) +
                           static_cast<std::size_t>(j)];
        const double b = x[static_cast<std::size_t>(omega) * static_cast<std::size_t>(K) +
                           static_cast<std::size_t>(j)];
        if (std::abs(a - b) > tol) return false;
      }
    }
  }
  return true;
}

double s2_norm_sq(const FiniteFilteredSpace& space, const AdaptedProcess& y) {
  double acc = 0.0;
  for (int omega = 0; omega < space.n_outcomes(); ++omega) {
    double worst = 0.0;
    for (int k = 0; k <= space.steps(); ++k) {
      double sq = 0.0;
      for (double v : y.at(k, omega)) sq += v * v;
      worst = std::max(worst, sq);
    }
    acc += space.prob()[static_cast<std::size_t>(omega)] * worst;
  }
  return acc;
}

}  // namespace bsde
