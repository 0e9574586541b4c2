#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "bsde/basis.hpp"
#include "bsde/driver.hpp"
#include "bsde/space.hpp"
#include "bsde/stieltjes.hpp"

namespace bsde {

/// BSDE data: terminal value Q, driver F and deterministic clock mu on a
/// finite filtered space with its martingale basis.  The clock may be signed;
/// the seminorm reference is the clock itself when nonnegative, otherwise the
/// total-variation clock E[<M^1>] + t + |mu| (atomized on the grid).
struct BsdeProblem {
  std::shared_ptr<const FiniteFilteredSpace> space;
  std::shared_ptr<const MartingaleBasis> basis;
  StieltjesFunction clock;
  DriverPtr driver;
  std::vector<double> terminal;  // n_outcomes * K

  BsdeProblem(std::shared_ptr<const FiniteFilteredSpace> space_,
              std::shared_ptr<const MartingaleBasis> basis_, StieltjesFunction clock_,
              DriverPtr driver_, std::vector<double> terminal_);

  int K() const { return driver->dim(); }
  const StieltjesFunction& seminorm_clock() const { return seminorm_clock_; }
  std::vector<double> densities(int k, int parent) const {
    return node_densities(*space, *basis, seminorm_clock_, k, parent);
  }

 private:
  StieltjesFunction seminorm_clock_;
};

struct StandardReport {
  enum class Mode { Linear, Quadratic };
  Mode mode = Mode::Linear;
  double f00_l2 = 0.0;        // E int ||F(.,0,0)||^2 d|mu|
  bool firm_ok = false;       // c_t dmu < 1 (linear) or c_t dmu^2 < 1 (quadratic)
  double firm_margin = 0.0;   // 1 - max_t of the firm product
  bool horizon_ok = false;    // linear mode only: mu nonnegative with mu_T <= 1
  bool support_ok = false;    // mu >> <M^1> as atom support inclusion
  double worst_audit_ratio = 0.0;
  int audit_samples = 0;
  bool standard() const {
    return firm_ok && support_ok && (mode == Mode::Quadratic || horizon_ok);
  }
};

/// Verdict record for the standard-driver conditions; never throws on a
/// failed condition (solvers raise NotStandard instead).
StandardReport check_standard(const BsdeProblem& problem, StandardReport::Mode mode,
                              int audit_samples = 64, std::uint64_t seed = 17);

}  // namespace bsde
