#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bsde/basis.hpp"
#include "bsde/space.hpp"

namespace bsde {

/// Node context handed to a driver evaluation.  psi holds the densities
/// d<M^i>/dmu at the node (size d); drivers read z only through coordinates
/// with psi > 0, which keeps them well defined on H^2_M equivalence classes.
struct DriverNode {
  int step = 0;         // k in 1..n, the driver is F_{k-1}-measurable
  int parent_cell = 0;  // cell index in partitions[k-1]
  int d = 0;
  std::span<const double> psi;
};

/// Driver F(omega, t, y, z) with declared squared-Lipschitz metadata:
/// ||F(y,z)-F(y',z')||^2 <= lip_y(k) ||y-y'||^2 + lip_z ||z-z'||^2_M.
/// Declared constants are authoritative; the randomized audit in
/// check_standard is advisory.
class Driver {
 public:
  virtual ~Driver() = default;

  virtual void eval(const DriverNode& node, std::span<const double> y,
                    std::span<const double> z, std::span<double> out) const = 0;
  virtual std::string kind() const = 0;

  int dim() const { return K_; }
  double lip_y(int step) const { return lip_y_.at(static_cast<std::size_t>(step - 1)); }
  const std::vector<double>& lip_y_all() const { return lip_y_; }
  double lip_z() const { return lip_z_; }
  double max_lip_y() const;
  bool depends_on_y() const { return depends_y_; }
  bool depends_on_z() const { return depends_z_; }
  /// Component j of F reads only component j of y.
  bool componentwise_in_y() const { return componentwise_; }

 protected:
  Driver(int K, std::vector<double> lip_y, double lip_z, bool dy, bool dz, bool cw)
      : K_(K), lip_y_(std::move(lip_y)), lip_z_(lip_z), depends_y_(dy), depends_z_(dz),
        componentwise_(cw) {}

  int K_;
  std::vector<double> lip_y_;
  double lip_z_;
  bool depends_y_;
  bool depends_z_;
  bool componentwise_;
};

using DriverPtr = std::shared_ptr<const Driver>;

/// F == 0.
DriverPtr make_zero_driver(int K, int steps);

/// F(y, z) = A y + sum_i B_i z^i + g, with B_i masked to coordinates where
/// psi^i > 0.  Declared constants must be supplied (see derive_linear_lip_*).
DriverPtr make_linear_driver(int K, int steps, std::vector<double> a_matrix,
                             std::vector<std::vector<double>> b_matrices,
                             std::vector<double> g, std::vector<double> lip_y, double lip_z);

/// Scalar F(y, z) = alpha ||z||_M (K = 1).
DriverPtr make_abs_z_driver(int steps, double alpha);

/// Componentwise clamp of a linear driver: clip(A y + sum B_i z^i + g, lo, hi).
DriverPtr make_clipped_driver(int K, int steps, std::vector<double> a_matrix,
                              std::vector<std::vector<double>> b_matrices,
                              std::vector<double> g, std::vector<double> lo,
                              std::vector<double> hi, std::vector<double> lip_y,
                              double lip_z);

/// Component j applies scalar sub-driver j to (y_j, z row j).
DriverPtr make_componentwise_driver(std::vector<DriverPtr> components);

/// Per-step rescaling lambda_k F of a base driver (clock transforms).
DriverPtr make_scaled_driver(DriverPtr base, std::vector<double> factors);

/// Valid squared y-Lipschitz constant for the linear/clipped drivers:
/// ||A||_F^2, doubled when the driver also reads z.
double derive_linear_lip_y(int K, std::span<const double> a_matrix, bool also_z);

/// Valid squared z-Lipschitz constant: max over nodes of
/// sum_{i: psi^i>0} ||B_i||_F^2 / psi^i, doubled when the driver also reads y.
double derive_linear_lip_z(int K, const std::vector<std::vector<double>>& b_matrices,
                           const FiniteFilteredSpace& space, const MartingaleBasis& basis,
                           const StieltjesFunction& clock, bool also_y);

}  // namespace bsde
