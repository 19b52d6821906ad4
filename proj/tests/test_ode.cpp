#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "dpgd/ode.hpp"
#include "dpgd/spectrum.hpp"

using dpgd::OdeProblem;
using dpgd::Schedule;
using dpgd::SpectrumModel;
using dpgd::TargetSpec;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

OdeProblem figure1_problem(const SpectrumModel& model, double alpha) {
  OdeProblem p;
  p.lambda = dpgd::eigenvalues(model);
  p.d0 = dpgd::mode_energies(p.lambda, TargetSpec::isotropic(1.0)).d0;
  p.schedule = alpha == 0 ? Schedule::constant(3.0) : Schedule::polynomial(alpha, 3.0);
  p.c = 1.0;
  p.rho = 1.0;
  p.gamma = 0.1;
  p.zeta = 0.3;
  return p;
}

}  // namespace

TEST_CASE("noiseless frozen-factor flow matches the exponential solution") {
  OdeProblem p;
  p.lambda = std::vector<double>(8, 1.0);
  p.d0 = std::vector<double>(8, 1.0);
  p.schedule = Schedule::constant(3.0);
  p.c = kInf;  // mu = nu = 1
  p.rho = kInf;
  p.gamma = 0.0;
  p.zeta = 0.0;
  auto curve = dpgd::integrate(p, 1e-4);
  double worst = 0;
  for (std::size_t j = 0; j < curve.grid.size(); ++j) {
    double exact = std::exp(-2.0 * 3.0 * curve.grid[j]);
    worst = std::fmax(worst, std::fabs(curve.R[j] - exact) / exact);
  }
  CHECK(worst <= 1e-6);
  // Gamma(t) = eta0 t here
  CHECK(curve.Gamma.back() == Catch::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("constant schedule has no in-run private noise") {
  auto base = figure1_problem(SpectrumModel::identity(64), 0.0);
  auto strict = base;
  strict.rho = 1e-3;  // much louder terminal noise, same trajectory
  auto a = dpgd::integrate(base, 1e-3);
  auto b = dpgd::integrate(strict, 1e-3);
  for (std::size_t j = 0; j < a.R.size(); ++j) CHECK(a.R[j] == b.R[j]);
  CHECK(b.final_private_risk > a.final_private_risk);
}

TEST_CASE("final private risk correction") {
  // alpha = 1/2 ends at eta~(1) = 0: no correction
  CHECK(dpgd::final_private_risk(0.25, Schedule::polynomial(0.5, 3.0), 1.0, 0.1, 1.0) ==
        0.25);
  // Figure-1 alpha = 0 configuration: 2 * 1 * 9 * 0.01 / 1 = 0.18
  CHECK(dpgd::final_private_risk(0.0, Schedule::constant(3.0), 1.0, 0.1, 1.0) ==
        Catch::Approx(0.18).epsilon(1e-12));
  // harmonic beta=2, tau=0.5: eta~(1) = 2/1.5
  double c = 0.7, gamma = 0.05, rho = 1.3;
  double want = 2.0 * c * c * (4.0 / 2.25) * gamma * gamma / (rho * rho);
  CHECK(dpgd::final_private_risk(0.1, Schedule::harmonic(2.0, 0.5), c, gamma, rho) ==
        Catch::Approx(0.1 + want).epsilon(1e-12));
}

TEST_CASE("mode energies stay non-negative along the trajectory") {
  for (double alpha : {0.0, 0.5}) {
    for (auto model : {SpectrumModel::identity(32), SpectrumModel::uniform(32)}) {
      auto p = figure1_problem(model, alpha);
      auto curve = dpgd::integrate(p, 1e-3);
      for (double r : curve.R) CHECK(r >= 0);
      for (std::size_t j = 1; j < curve.Gamma.size(); ++j)
        CHECK(curve.Gamma[j] >= curve.Gamma[j - 1]);
    }
  }
}

TEST_CASE("sandwich bounds bracket the risk") {
  SECTION("identity spectrum: upper and lower collapse onto the risk") {
    auto p = figure1_problem(SpectrumModel::identity(16), 0.5);
    auto curve = dpgd::integrate(p, 1e-3);
    auto [upper, lower] = dpgd::sandwich_bounds(p, 1e-3);
    for (std::size_t j = 0; j < curve.R.size(); ++j) {
      CHECK(std::fabs(upper.R[j] - curve.R[j]) <= 1e-9);
      CHECK(std::fabs(lower.R[j] - curve.R[j]) <= 1e-9);
    }
  }

  SECTION("uniform spectrum under the Figure-1 configuration") {
    for (double alpha : {0.0, 0.5}) {
      auto p = figure1_problem(SpectrumModel::uniform(200), alpha);
      auto curve = dpgd::integrate(p, 1e-3);
      auto [upper, lower] = dpgd::sandwich_bounds(p, 1e-3);
      for (std::size_t j = 0; j < curve.R.size(); ++j) {
        CHECK(lower.R[j] <= curve.R[j] + 1e-12);
        CHECK(curve.R[j] <= upper.R[j] + 1e-12);
        CHECK(lower.R[j] >= -1e-15);
      }
    }
  }

  SECTION("upper bound is monotone in lambda_max") {
    auto p = figure1_problem(SpectrumModel::uniform(64), 0.5);
    auto widened = p;
    widened.lambda.front() *= 2.0;  // inflate lambda_max, keep lambda_min
    auto [up1, lo1] = dpgd::sandwich_bounds(p, 1e-3);
    auto [up2, lo2] = dpgd::sandwich_bounds(widened, 1e-3);
    for (std::size_t j = 1; j < up1.R.size(); ++j) CHECK(up2.R[j] >= up1.R[j] - 1e-12);
  }
}

TEST_CASE("implicit equation residual") {
  SECTION("zero-dynamics limit") {
    auto p = figure1_problem(SpectrumModel::uniform(64), 0.0);
    p.schedule = Schedule::constant(1e-12);
    auto curve = dpgd::integrate(p, 1e-2);
    CHECK(dpgd::implicit_residual(curve, p) <= 1e-10);
  }

  SECTION("Figure-1 configuration is self-consistent") {
    for (double alpha : {0.0, 0.5}) {
      auto p = figure1_problem(SpectrumModel::uniform(128), alpha);
      auto curve = dpgd::integrate(p, 1e-3);
      CHECK(dpgd::implicit_residual(curve, p) <= 1e-3);
    }
  }

  SECTION("residual decreases monotonically under step refinement") {
    auto p = figure1_problem(SpectrumModel::uniform(128), 0.5);
    double prev = std::numeric_limits<double>::infinity();
    for (double dt : {8e-3, 4e-3, 2e-3, 1e-3}) {
      auto curve = dpgd::integrate(p, dt);
      double res = dpgd::implicit_residual(curve, p);
      CHECK(res < prev);
      prev = res;
    }
  }
}

TEST_CASE("step-refinement convergence of the endpoint") {
  auto p = figure1_problem(SpectrumModel::uniform(128), 0.5);
  double r8 = dpgd::integrate(p, 8e-3).R.back();
  double r4 = dpgd::integrate(p, 4e-3).R.back();
  double r2 = dpgd::integrate(p, 2e-3).R.back();
  double r1 = dpgd::integrate(p, 1e-3).R.back();
  double d1 = std::fabs(r8 - r4), d2 = std::fabs(r4 - r2), d3 = std::fabs(r2 - r1);
  CHECK(d2 < d1);
  CHECK(d3 < d2);
}

TEST_CASE("more privacy noise never helps") {
  double prev = std::numeric_limits<double>::infinity();
  for (double rho : {0.3, 1.0, 3.0, 10.0}) {
    auto p = figure1_problem(SpectrumModel::uniform(64), 0.0);
    p.rho = rho;
    auto curve = dpgd::integrate(p, 1e-3);
    CHECK(curve.final_private_risk <= prev + 1e-15);
    prev = curve.final_private_risk;
  }
}

TEST_CASE("kink of the capped rate is integrated accurately") {
  // eta~(0) > 2/gamma so min(eta~, 2/gamma) has a kink inside (0,1)
  OdeProblem p;
  p.lambda = dpgd::eigenvalues(SpectrumModel::identity(8));
  p.d0 = dpgd::mode_energies(p.lambda, TargetSpec::isotropic(1.0)).d0;
  p.schedule = Schedule::polynomial(1.0, 30.0);
  p.c = 1.0;
  p.rho = 1.0;
  p.gamma = 0.1;  // cap at 20, crossing at t = 1/3
  p.zeta = 0.3;
  auto grid = dpgd::make_time_grid(p, 1e-3);
  bool has_kink = false;
  for (double t : grid) has_kink = has_kink || std::fabs(t - 1.0 / 3.0) < 1e-12;
  CHECK(has_kink);
  auto curve = dpgd::integrate(p, grid);
  CHECK(dpgd::implicit_residual(curve, p) <= 1e-3);
}

TEST_CASE("unstable step sizes raise instead of returning garbage") {
  OdeProblem p;
  p.lambda = dpgd::eigenvalues(SpectrumModel::identity(4));
  p.d0 = dpgd::mode_energies(p.lambda, TargetSpec::isotropic(1.0)).d0;
  p.schedule = Schedule::constant(5000.0);
  p.c = kInf;
  p.rho = kInf;
  p.gamma = 1e-4;  // cap at 2e4 never binds; decay rate ~7.5e3 per unit time
  p.zeta = 0.3;
  CHECK_THROWS_AS(dpgd::integrate(p, 1e-3), dpgd::numerical_error);
  // refining the step restores stability
  CHECK_NOTHROW(dpgd::integrate(p, 1e-4));
}

TEST_CASE("configuration validation") {
  OdeProblem p;
  p.lambda = {1.0};
  p.d0 = {0.5};
  p.schedule = Schedule::polynomial(0.25, 1.0);  // unbounded noise rate
  p.c = 1.0;
  p.rho = 1.0;
  p.gamma = 0.1;
  CHECK_THROWS_AS(dpgd::integrate(p, 1e-2), dpgd::config_error);

  p.schedule = Schedule::polynomial(0.5, 1.0);
  p.c = kInf;  // infinite clipping with active private noise
  CHECK_THROWS_AS(dpgd::integrate(p, 1e-2), dpgd::config_error);
}
