#include "doctest.h"
#include "tabs/fluid.hpp"

#include <cmath>
#include <numeric>

using namespace tabs;

namespace {

OccupancyState make(std::vector<double> head, double delta0, double delta1, double kappa = 0.0,
                    std::size_t depth = 16) {
    OccupancyState s;
    s.q.assign(depth, kappa);
    std::copy(head.begin(), head.end(), s.q.begin());
    s.delta0 = delta0;
    s.delta1 = delta1;
    s.kappa = kappa;
    return s;
}

FluidParams params(double lambda, double mu, double nu, double kappa, std::size_t depth = 16) {
    FluidParams p;
    p.lambda = lambda;
    p.mu = mu;
    p.nu = nu;
    p.kappa = kappa;
    p.depth = depth;
    return p;
}

double max_abs(const FluidDerivative& d) {
    double m = std::max(std::abs(d.ddelta0), std::abs(d.ddelta1));
    for (double x : d.dq) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

TEST_CASE("routing sends everything to idle-on servers while u > 0") {
    const auto s = make({0.4, 0.1}, 0.2, 0.1);  // u = 0.3
    const auto p = routing_coeffs(s, 0.6, 0.1);
    CHECK(p[0] == 1.0);
    for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i] == 0.0);
}

TEST_CASE("routing with no idle-on servers splits the overflow by depth") {
    const auto s = make({0.8, 0.3}, 0.2, 0.0);  // u = 0
    const auto p = routing_coeffs(s, 0.6, 0.1);
    CHECK(p[0] == doctest::Approx(5.0 / 6.0).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.1041666666666667).epsilon(1e-13));
    CHECK(p[2] == doctest::Approx((1.0 / 6.0) * (0.3 / 0.8)).epsilon(1e-13));
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("routing at the equilibrium is all idle") {
    for (double lambda : {0.2, 0.5, 0.8}) {
        const auto s = make({lambda}, 1.0 - lambda, 0.0);
        CHECK(routing_coeffs(s, lambda, 0.1)[0] == 1.0);
    }
}

TEST_CASE("routing with infinite queues leaves their share outside sum(p)") {
    const auto s = make({0.8, 0.5, 0.4}, 0.2, 0.0, 0.3);
    const auto p = routing_coeffs(s, 0.9, 0.1);
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    CHECK(p[0] < 1.0);
    CHECK(total + (1.0 - p[0]) * 0.3 / 0.8 == doctest::Approx(1.0).epsilon(1e-14));
    for (double x : p) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }
}

TEST_CASE("routing with q1 = 0 and overflow is degenerate") {
    const auto s = make({}, 1.0, 0.0);
    CHECK_THROWS_AS(routing_coeffs(s, 0.5, 0.1), DegenerateRouting);
}

TEST_CASE("rhs vanishes at the kappa = 0 equilibrium") {
    for (double lambda : {0.1, 0.5, 0.9}) {
        const auto d = rhs(make({lambda}, 1.0 - lambda, 0.0), params(lambda, 1.0, 0.1, 0.0));
        CHECK(max_abs(d) <= 1e-14);
    }
}

TEST_CASE("rhs vanishes at the kappa equilibrium") {
    const auto s = make({0.5, 0.2}, 0.5, 0.0, 0.2);
    CHECK(max_abs(rhs(s, params(0.3, 1.0, 0.1, 0.2))) <= 1e-14);
}

TEST_CASE("rhs from an all idle-off start") {
    // q = 0, delta0 = 1, delta1 = 0, u = 0: p0 = min(0 / lambda, 1) = 0, so every
    // task overflows, is lost (no busy server) and starts a setup.
    const double lambda = 0.5;
    const auto d = rhs(make({}, 1.0, 0.0), params(lambda, 1.0, 0.1, 0.0));
    CHECK(d.dq[0] == 0.0);
    CHECK(d.ddelta1 == lambda);
    CHECK(d.ddelta0 == -lambda);
    CHECK(d.dxi == lambda);
}

TEST_CASE("rhs mass identity holds as coded") {
    // sum_i dq_i = lambda * sum_{i<I} p_i - (q_1 - q_{I+1})
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const double kappa = rng.below(3) == 0 ? 0.3 * rng.uniform() : 0.0;
        const std::size_t depth = 8;
        OccupancyState s;
        s.kappa = kappa;
        s.q.resize(depth);
        double level = kappa + (1.0 - kappa) * rng.uniform();
        for (auto& q : s.q) {
            q = level;
            level = kappa + (level - kappa) * rng.uniform();
        }
        const double room = 1.0 - s.q[0];
        const bool saturate = rng.below(2) == 0;
        s.delta1 = room * rng.uniform() * 0.5;
        s.delta0 = saturate ? room - s.delta1 : (room - s.delta1) * rng.uniform();
        const FluidParams fp = params(0.2 + 0.7 * rng.uniform(), 1.0, 0.3, kappa, depth);
        const auto d = rhs(s, fp);
        const auto p = routing_coeffs(s, fp.lambda, fp.nu);
        const double lhs = std::accumulate(d.dq.begin(), d.dq.end(), 0.0);
        const double psum = std::accumulate(p.begin(), p.end() - 1, 0.0);
        CHECK(lhs == doctest::Approx(fp.lambda * psum - (s.q1() - kappa)).epsilon(1e-12));
        CHECK(d.ddelta0 + d.ddelta1 == doctest::Approx(fp.mu * s.u() - fp.nu * s.delta1).epsilon(1e-12));
    }
}

TEST_CASE("integrate matches the closed form while idle-on servers remain") {
    // With u > 0 throughout: q1' = lambda - q1 (q2 = 0), delta1' = -nu delta1,
    // delta0' = mu (1 - q1 - delta0 - delta1); solved by hand below.
    const double lambda = 0.5, mu = 0.5, nu = 0.1, q10 = 0.2, d10 = 0.3, horizon = 1.0;
    FluidParams fp = params(lambda, mu, nu, 0.0);
    fp.horizon = horizon;
    fp.dt = 1e-3;
    const auto traj = integrate(make({q10}, 0.0, d10), fp);
    const auto& end = traj.samples.back();
    REQUIRE(end.t == doctest::Approx(horizon));
    REQUIRE(end.state.u() > 0.05);

    const double t = horizon;
    const double q1 = lambda + (q10 - lambda) * std::exp(-t);
    const double d1 = d10 * std::exp(-nu * t);
    const double d0 = (1.0 - lambda) * (1.0 - std::exp(-mu * t)) -
                      (q10 - lambda) * mu / (mu - 1.0) * (std::exp(-t) - std::exp(-mu * t)) -
                      d10 * mu / (mu - nu) * (std::exp(-nu * t) - std::exp(-mu * t));
    CHECK(end.state.q1() == doctest::Approx(q1).epsilon(1e-10));
    CHECK(end.state.delta1 == doctest::Approx(d1).epsilon(1e-10));
    CHECK(end.state.delta0 == doctest::Approx(d0).epsilon(1e-10));
    CHECK(end.state.q_at(2) == 0.0);
    CHECK(end.xi == 0.0);
}

TEST_CASE("integrate from the fixed point stays put") {
    FluidParams fp = params(0.5, 1.0, 0.1, 0.0);
    fp.horizon = 100.0;
    const auto fpnt = fixed_point(0.5, 0.0, fp.depth);
    const auto traj = integrate(fpnt, fp);
    for (const auto& s : traj.samples) {
        CHECK(std::abs(s.state.q1() - 0.5) < 1e-10);
        CHECK(std::abs(s.state.delta0 - 0.5) < 1e-10);
        CHECK(std::abs(s.state.delta1) < 1e-10);
    }
}

TEST_CASE("integrate from q1 = 0.9 reaches the equilibrium") {
    FluidParams fp = params(0.5, 1.0, 0.1, 0.0);
    fp.horizon = 200.0;
    const auto traj = integrate(make({0.9}, 0.0, 0.0), fp);
    const auto& end = traj.samples.back().state;
    CHECK(std::abs(end.q1() - 0.5) < 1e-3);
    CHECK(std::abs(end.delta0 - 0.5) < 1e-3);
    CHECK_FALSE(traj.truncation_warning);
}

TEST_CASE("integrate drives q1 to 1 when kappa >= 1 - lambda") {
    FluidParams fp = params(0.5, 1.0, 0.1, 0.6);
    fp.horizon = 300.0;
    const auto traj = integrate(make({0.6}, 0.4, 0.0, 0.6), fp);
    CHECK(traj.samples.back().state.q1() > 0.99);
}

TEST_CASE("trajectories stay in E_kappa with nondecreasing xi") {
    Rng rng(5);
    for (int trial = 0; trial < 6; ++trial) {
        const double kappa = trial % 2 == 0 ? 0.0 : 0.2;
        FluidParams fp = params(0.3 + 0.6 * rng.uniform(), 0.5 + rng.uniform(), 0.05 + rng.uniform(), kappa);
        fp.horizon = 30.0;
        fp.record_every = 10;
        const double q1 = kappa + (1.0 - kappa) * rng.uniform();
        const double q2 = kappa + (q1 - kappa) * rng.uniform();
        const double d0 = (1.0 - q1) * rng.uniform();
        const auto traj = integrate(make({q1, q2}, d0, 0.0, kappa), fp);
        double xi = 0.0;
        for (const auto& s : traj.samples) {
            CHECK_FALSE(check_space(s.state, 1e-9).has_value());
            CHECK(s.xi >= xi);
            xi = s.xi;
        }
    }
}

TEST_CASE("integrate rejects states outside E_kappa and bad parameters") {
    FluidParams fp = params(0.5, 1.0, 0.1, 0.0);
    CHECK_THROWS_AS(integrate(make({0.3, 0.5}, 0.0, 0.0), fp), std::invalid_argument);
    CHECK_THROWS_AS(integrate(make({0.9}, 0.3, 0.0), fp), std::invalid_argument);
    fp.dt = 0.0;
    CHECK_THROWS_AS(integrate(make({0.5}, 0.0, 0.0), fp), std::invalid_argument);
}

TEST_CASE("a huge step overflows the projection") {
    FluidParams fp = params(0.9, 5.0, 5.0, 0.0);
    fp.dt = 2.0;
    fp.horizon = 20.0;
    CHECK_THROWS_AS(integrate(make({0.05}, 0.9, 0.0), fp), ProjectionOverflow);
}

TEST_CASE("fixed point closed forms") {
    const auto a = fixed_point(0.5, 0.0);
    CHECK(a.q1() == 0.5);
    CHECK(a.q_at(2) == 0.0);
    CHECK(a.delta0 == 0.5);
    CHECK(a.delta1 == 0.0);

    const auto b = fixed_point(0.3, 0.2);
    CHECK(b.q1() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(b.q_at(2) == 0.2);
    CHECK(b.delta0 == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(b.delta1 == 0.0);

    CHECK_THROWS_AS(fixed_point(0.5, 0.5), SaturatedRegime);
    CHECK_THROWS_AS(fixed_point(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("compare against itself is zero and disjoint ranges fail") {
    FluidParams fp = params(0.5, 1.0, 0.1, 0.0);
    fp.horizon = 10.0;
    const auto traj = integrate(make({0.9}, 0.0, 0.0), fp);
    SimTrace trace;
    for (const auto& s : traj.samples) {
        SimSample x;
        x.t = s.t;
        x.occupancy = s.state;
        trace.samples.push_back(x);
    }
    const auto rep = compare(trace, traj);
    CHECK(rep.sup_q1 == 0.0);
    CHECK(rep.sup_delta0 == 0.0);
    CHECK(rep.sup_delta1 == 0.0);
    CHECK(rep.points == traj.samples.size());

    for (auto& s : trace.samples) s.t += 100.0;
    CHECK_THROWS_AS(compare(trace, traj), std::invalid_argument);
}

TEST_CASE("starts with no busy servers integrate through the stiff overflow layer") {
    FluidParams p;
    p.lambda = 0.5;
    p.horizon = 5.0;
    p.record_every = 50;
    for (auto [d0, d1] : {std::pair{1.0, 0.0}, std::pair{0.0, 1.0}}) {
        OccupancyState s;
        s.q.assign(p.depth, 0.0);
        s.delta0 = d0;
        s.delta1 = d1;
        const FluidTrajectory traj = integrate(s, p);
        for (const FluidSample& x : traj.samples) CHECK_FALSE(check_space(x.state, 1e-9).has_value());
        CHECK(traj.samples.back().state.q1() > 0.0);
        CHECK(traj.max_clip < 1e-6 + p.dt * (1.0 + p.lambda + p.mu + p.nu));
    }
}
