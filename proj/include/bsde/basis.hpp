#pragma once

#include <span>
#include <vector>

#include "bsde/space.hpp"
#include "bsde/stieltjes.hpp"

namespace bsde {

/// Orthogonal martingale basis on a finite filtered space.
///
/// At each branching node (step k, parent cell) the space of one-step
/// martingale increments has dimension m-1 for m children; the basis holds an
/// ordered conditionally-orthogonal family spanning it, together with the
/// predictable quadratic variation increments qv[i] = E[(dM^i)^2 | parent].
/// Basis vector i exists only where the node has at least i+2 children, which
/// gives the support nesting <M^1> > <M^2> > ... by construction.
struct MartingaleBasis {
  struct Node {
    std::vector<std::vector<double>> vectors;  // [i][child slot]
    std::vector<double> qv;                    // same length as vectors
  };

  int d = 0;                             // number of basis martingales
  std::vector<std::vector<Node>> nodes;  // [k-1][parent cell]

  const Node& node(int k, int parent) const {
    return nodes[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(parent)];
  }

  /// Increment of M^i over step k on outcome omega.
  double increment(const FiniteFilteredSpace& space, int k, int omega, int i) const;
  /// E[d<M^1>_k] across cells, used by the reference clock.
  double expected_qv1_step(const FiniteFilteredSpace& space, int k) const;
};

/// Haar-style construction: children ordered by smallest outcome index, seed
/// i is the indicator step between the first i children and child i+1,
/// normalised to take the value 1 on the leading block.
MartingaleBasis build_martingale_basis(const FiniteFilteredSpace& space);

/// Martingale representation: Z^i = E[dN dM^i | cell] / d<M^i> wherever the
/// quadratic variation is positive, zero elsewhere.  Checks the martingale
/// property of N to `martingale_tol` and reconstructs dN exactly.
PredictableProcess represent(const FiniteFilteredSpace& space, const MartingaleBasis& basis,
                             const AdaptedProcess& n_process, double martingale_tol = 1e-10);

/// Reference clock mu_t = (E[<M^1>_t] + t) / (E[<M^1>_T] + T), carried on the
/// grid as atoms (quadratic variation part) plus interval masses (the +t part).
StieltjesFunction reference_clock(const FiniteFilteredSpace& space,
                                  const MartingaleBasis& basis);

/// Densities psi^i = d<M^i>/dmu at one node (zero where both vanish).
/// Throws UndefinedDensity if the clock has no atom where <M^i> has mass.
std::vector<double> node_densities(const FiniteFilteredSpace& space,
                                   const MartingaleBasis& basis,
                                   const StieltjesFunction& clock, int k, int parent);

/// ||z||^2_{M} = sum_i ||z^i||^2 psi^i for a K x d row-major block.
double m_seminorm_sq(std::span<const double> z, int K, std::span<const double> psi);

/// E[ int ||Z||^2_M dmu ].
double h2_norm_sq(const FiniteFilteredSpace& space, const MartingaleBasis& basis,
                  const StieltjesFunction& clock, const PredictableProcess& z);

/// Pathwise sum_i int_{]t_from, t_to]} Z^i dM^i, returned per outcome (K values).
std::vector<double> stochastic_integral(const FiniteFilteredSpace& space,
                                        const MartingaleBasis& basis,
                                        const PredictableProcess& z, int from, int to);

}  // namespace bsde
