#pragma once

#include "tabs/model.hpp"
#include "tabs/simulator.hpp"

#include <stdexcept>
#include <vector>

namespace tabs {

// Branch thresholds for the two discontinuities of the fluid dynamics:
// u > u_tol selects the "idle-on servers available" branch of p0, and
// delta0 > delta_tol switches setup initiation on.
inline constexpr double u_tol = 1e-12;
inline constexpr double delta_tol = 1e-12;

struct FluidParams {
    double lambda = 0.5;
    double mu = 1.0;
    double nu = 0.1;
    double kappa = 0.0;
    std::size_t depth = default_occupancy_depth;  // truncation I_max
    double dt = 1e-3;
    double horizon = 100.0;
    std::size_t record_every = 100;  // steps between recorded samples

    void validate() const;
};

class DegenerateRouting : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class ProjectionOverflow : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SaturatedRegime : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Fractions of incoming work sent to servers holding i tasks, p[0] .. p[I_max].
// p[0] is the idle-on share; p[i] for i >= 1 splits the remainder uniformly over
// busy servers of finite depth i. With kappa > 0 the infinite queues take the
// remaining (1 - p0) kappa / q1, so sum(p) = 1 only when kappa = 0.
// nu enters p0 through the setup-completion supply delta1 * nu.
// Throws DegenerateRouting when q1 = 0 and p0 < 1.
std::vector<double> routing_coeffs(const OccupancyState& state, double lambda, double nu);

struct FluidDerivative {
    std::vector<double> dq;  // dq[i-1] = d q_i / dt
    double ddelta0 = 0.0;
    double ddelta1 = 0.0;
    double dxi = 0.0;  // setup initiation rate
};

// Right-hand side of the truncated mean-field ODE, with q_{I_max+1} = kappa.
// An empty system (q1 = 0) loses the tasks that find no idle-on server, as
// the finite system does; it is the only case where routing_coeffs would throw.
FluidDerivative rhs(const OccupancyState& state, const FluidParams& params);

struct FluidSample {
    double t = 0.0;
    OccupancyState state;
    double xi = 0.0;  // cumulative setup mass
};

struct FluidTrajectory {
    std::vector<FluidSample> samples;
    bool truncation_warning = false;  // q[I_max] - kappa exceeded 1e-6
    double max_clip = 0.0;            // largest projection correction applied
};

// Fixed-step RK4 with projection onto E_kappa after every step. Clipping at the
// boundaries of E_kappa is expected where the right-hand side switches; a
// correction larger than one step of the fastest rate (or an ordering defect
// above 1e-6) throws ProjectionOverflow.
FluidTrajectory integrate(const OccupancyState& initial, const FluidParams& params);

// Closed-form equilibrium for kappa < 1 - lambda:
// q1 = kappa + lambda, q_i = kappa (i >= 2), delta0 = 1 - lambda - kappa, delta1 = 0.
OccupancyState fixed_point(double lambda, double kappa,
                           std::size_t depth = default_occupancy_depth);

struct SupNormReport {
    double sup_q1 = 0.0, t_q1 = 0.0;
    double sup_delta0 = 0.0, t_delta0 = 0.0;
    double sup_delta1 = 0.0, t_delta1 = 0.0;
    std::size_t points = 0;
};

// Sup-norm distance on the trace's sample times inside the fluid's time range,
// with the fluid linearly interpolated.
SupNormReport compare(const SimTrace& trace, const FluidTrajectory& fluid);

}  // namespace tabs
