#include "tabs/fluid.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace tabs {

void FluidParams::validate() const {
    auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
    if (!positive(lambda) || !positive(mu) || !positive(nu)) {
        throw std::invalid_argument("fluid rates must be positive");
    }
    if (!(kappa >= 0.0 && kappa <= 1.0)) throw std::invalid_argument("kappa must lie in [0,1]");
    if (depth < 2) throw std::invalid_argument("fluid depth must be >= 2");
    if (!positive(dt)) throw std::invalid_argument("dt must be positive");
    if (!(std::isfinite(horizon) && horizon >= 0.0)) throw std::invalid_argument("horizon must be >= 0");
    if (record_every == 0) throw std::invalid_argument("record_every must be >= 1");
}

namespace {

double idle_share(const OccupancyState& s, double lambda, double nu) {
    if (s.u() > u_tol) return 1.0;
    const double supply = s.delta1 * nu + s.q_at(1) - s.q_at(2);
    return std::clamp(supply / lambda, 0.0, 1.0);
}

// Shared by routing_coeffs (strict) and rhs (empty system loses overflow).
std::vector<double> coeffs(const OccupancyState& s, double lambda, double nu, bool strict) {
    const std::size_t depth = s.depth();
    std::vector<double> p(depth + 1, 0.0);
    p[0] = idle_share(s, lambda, nu);
    if (p[0] >= 1.0) return p;
    const double q1 = s.q1();
    if (q1 <= 0.0) {
        if (strict) {
            throw DegenerateRouting("routing undefined: q1 = 0 while tasks overflow idle servers");
        }
        return p;
    }
    const double overflow = (1.0 - p[0]) / q1;
    for (std::size_t i = 1; i <= depth; ++i) p[i] = overflow * (s.q_at(i) - s.q_at(i + 1));
    return p;
}

}  // namespace

std::vector<double> routing_coeffs(const OccupancyState& state, double lambda, double nu) {
    if (state.depth() == 0) throw std::invalid_argument("routing_coeffs: empty q vector");
    if (!(lambda > 0.0)) throw std::invalid_argument("routing_coeffs: lambda must be positive");
    return coeffs(state, lambda, nu, true);
}

FluidDerivative rhs(const OccupancyState& state, const FluidParams& params) {
    const std::size_t depth = state.depth();
    const std::vector<double> p = coeffs(state, params.lambda, params.nu, false);

    FluidDerivative d;
    d.dq.resize(depth);
    for (std::size_t i = 1; i <= depth; ++i) {
        d.dq[i - 1] = params.lambda * p[i - 1] - (state.q_at(i) - state.q_at(i + 1));
    }
    const double setups = state.delta0 > delta_tol ? params.lambda * (1.0 - p[0]) : 0.0;
    d.ddelta0 = params.mu * state.u() - setups;
    d.ddelta1 = setups - params.nu * state.delta1;
    d.dxi = setups;
    return d;
}

namespace {

// Flat RK4 state: q_1..q_I, delta0, delta1, xi.
struct Packed {
    std::vector<double> y;
    std::size_t depth;

    OccupancyState unpack(double kappa) const {
        OccupancyState s;
        s.q.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(depth));
        s.delta0 = y[depth];
        s.delta1 = y[depth + 1];
        s.kappa = kappa;
        return s;
    }
};

// rhs without the overflow of arrivals onto busy servers (handled by
// transport() below).
std::vector<double> derivative(const Packed& at, const FluidParams& params) {
    const OccupancyState s = at.unpack(params.kappa);
    const FluidDerivative d = rhs(s, params);
    const std::vector<double> p = coeffs(s, params.lambda, params.nu, false);
    std::vector<double> out(d.dq);
    for (std::size_t i = 1; i < out.size(); ++i) out[i] -= params.lambda * p[i];
    out.push_back(d.ddelta0);
    out.push_back(d.ddelta1);
    out.push_back(d.dxi);
    return out;
}

Packed axpy(const Packed& base, double a, const std::vector<double>& k) {
    Packed out = base;
    for (std::size_t i = 0; i < out.y.size(); ++i) out.y[i] += a * k[i];
    return out;
}

// Overflow arrivals hit each busy server at rate a = lambda (1 - p0) / q1,
// which is stiff while q1 is small. Over tau with a frozen, the level of a
// busy server moves up by a Poisson(a tau) amount; servers pushed past the
// deepest tracked level stay there. Solved exactly, so stable for any a.
void transport(Packed& y, const FluidParams& params, double tau) {
    const std::size_t depth = y.depth;
    const double kappa = params.kappa;
    const double q1 = y.y[0];
    if (!(q1 > 0.0)) return;
    const double p0 = idle_share(y.unpack(kappa), params.lambda, params.nu);
    if (p0 >= 1.0) return;
    const double mean = params.lambda * (1.0 - p0) / q1 * tau;
    if (!(mean > 0.0)) return;

    // tail[k] = P(X >= k), k = 0..depth-1.
    std::vector<double> tail(depth, 0.0);
    double cdf = 0.0;
    for (std::size_t k = 0; k < depth; ++k) {
        tail[k] = std::max(0.0, 1.0 - cdf);
        const double kd = static_cast<double>(k);
        cdf += std::exp(-mean + kd * std::log(mean) - std::lgamma(kd + 1.0));
    }
    std::vector<double> mass(depth);
    for (std::size_t i = 0; i < depth; ++i) {
        const double next = i + 1 < depth ? y.y[i + 1] : kappa;
        mass[i] = std::max(0.0, y.y[i] - next);
    }
    for (std::size_t j = 1; j < depth; ++j) {
        double q = kappa;
        for (std::size_t i = 0; i < depth; ++i) q += mass[i] * (j <= i ? 1.0 : tail[j - i]);
        y.y[j] = q;
    }
}

// Returns the largest boundary clip applied; throws on ordering defects > 1e-6.
double project(Packed& p, double kappa) {
    const std::size_t depth = p.depth;
    double clip = 0.0;
    auto clamp_to = [&](double& x, double lo, double hi) {
        if (x < lo) {
            clip = std::max(clip, lo - x);
            x = lo;
        } else if (x > hi) {
            clip = std::max(clip, x - hi);
            x = hi;
        }
    };
    for (double x : p.y) {
        if (!std::isfinite(x)) throw ProjectionOverflow("non-finite fluid state");
    }
    for (std::size_t i = 0; i < depth; ++i) clamp_to(p.y[i], kappa, 1.0);
    for (std::size_t i = 1; i < depth; ++i) {
        const double excess = p.y[i] - p.y[i - 1];
        if (excess > 0.0) {
            if (excess > 1e-6) {
                throw ProjectionOverflow(
                    fmt::format("q{} exceeds q{} by {:.3e}", i + 1, i, excess));
            }
            p.y[i] = p.y[i - 1];
        }
    }
    double& d0 = p.y[depth];
    double& d1 = p.y[depth + 1];
    clamp_to(d0, 0.0, 1.0);
    clamp_to(d1, 0.0, 1.0);
    double excess = p.y[0] + d0 + d1 - 1.0;
    if (excess > 0.0) {
        clip = std::max(clip, excess);
        const double from0 = std::min(excess, d0);
        d0 -= from0;
        excess -= from0;
        d1 -= std::min(excess, d1);
    }
    return clip;
}

}  // namespace

FluidTrajectory integrate(const OccupancyState& initial, const FluidParams& params) {
    params.validate();
    if (initial.depth() != params.depth) {
        throw std::invalid_argument(fmt::format("initial depth {} != fluid depth {}",
                                                initial.depth(), params.depth));
    }
    if (std::abs(initial.kappa - params.kappa) > 1e-12) {
        throw std::invalid_argument("initial kappa differs from fluid kappa");
    }
    if (auto broken = check_space(initial, 1e-9)) {
        throw std::invalid_argument("initial state outside E_kappa: " + *broken);
    }

    const double kappa = params.kappa;
    // No step of a correct RK4 update moves a coordinate farther past a
    // switching surface than dt times the largest rate in the system.
    const double clip_limit = 1e-6 + params.dt * (1.0 + params.lambda + params.mu + params.nu);

    Packed y{{}, params.depth};
    y.y = initial.q;
    y.y.push_back(initial.delta0);
    y.y.push_back(initial.delta1);
    y.y.push_back(0.0);

    FluidTrajectory traj;
    auto record = [&](double t) { traj.samples.push_back({t, y.unpack(kappa), y.y.back()}); };
    auto check_depth = [&] {
        if (y.y[params.depth - 1] - kappa > 1e-6) traj.truncation_warning = true;
    };
    record(0.0);
    check_depth();

    const auto steps = static_cast<std::size_t>(std::ceil(params.horizon / params.dt - 1e-9));
    for (std::size_t k = 1; k <= steps; ++k) {
        const double t_prev = static_cast<double>(k - 1) * params.dt;
        const double t = std::min(static_cast<double>(k) * params.dt, params.horizon);
        const double h = t - t_prev;

        transport(y, params, 0.5 * h);
        const auto k1 = derivative(y, params);
        const auto k2 = derivative(axpy(y, 0.5 * h, k1), params);
        const auto k3 = derivative(axpy(y, 0.5 * h, k2), params);
        const auto k4 = derivative(axpy(y, h, k3), params);
        for (std::size_t i = 0; i < y.y.size(); ++i) {
            y.y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        transport(y, params, 0.5 * h);

        const double clip = project(y, kappa);
        traj.max_clip = std::max(traj.max_clip, clip);
        if (clip > clip_limit) {
            throw ProjectionOverflow(
                fmt::format("projection of {:.3e} at t={} exceeds {:.3e}", clip, t, clip_limit));
        }
        check_depth();
        if (k % params.record_every == 0 || k == steps) record(t);
    }
    return traj;
}

OccupancyState fixed_point(double lambda, double kappa, std::size_t depth) {
    if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("fixed_point: need 0 < lambda < 1");
    if (!(kappa >= 0.0 && kappa <= 1.0)) throw std::invalid_argument("fixed_point: kappa outside [0,1]");
    if (depth < 2) throw std::invalid_argument("fixed_point: depth must be >= 2");
    if (kappa >= 1.0 - lambda) {
        throw SaturatedRegime(fmt::format(
            "kappa {} >= 1 - lambda {}: no interior equilibrium, q1 is driven to 1", kappa,
            1.0 - lambda));
    }

    OccupancyState s;
    s.q.assign(depth, kappa);
    s.q[0] = kappa + lambda;
    s.delta0 = 1.0 - lambda - kappa;
    s.delta1 = 0.0;
    s.kappa = kappa;

    FluidParams probe;
    probe.lambda = lambda;
    probe.kappa = kappa;
    probe.depth = depth;
    const FluidDerivative d = rhs(s, probe);
    double worst = std::max({std::abs(d.ddelta0), std::abs(d.ddelta1)});
    for (double x : d.dq) worst = std::max(worst, std::abs(x));
    if (worst > 1e-14) {
        throw std::logic_error(fmt::format("fixed_point: residual {:.3e} at equilibrium", worst));
    }
    return s;
}

SupNormReport compare(const SimTrace& trace, const FluidTrajectory& fluid) {
    if (trace.samples.empty() || fluid.samples.empty()) {
        throw std::invalid_argument("compare: empty trace or trajectory");
    }
    const auto& fs = fluid.samples;
    const double lo = fs.front().t;
    const double hi = fs.back().t;

    SupNormReport rep;
    auto track = [](double diff, double t, double& sup, double& at) {
        if (diff > sup) {
            sup = diff;
            at = t;
        }
    };
    std::size_t j = 0;
    for (const SimSample& s : trace.samples) {
        if (s.t < lo - 1e-12 || s.t > hi + 1e-12) continue;
        while (j + 1 < fs.size() && fs[j + 1].t < s.t) ++j;
        const FluidSample& a = fs[j];
        const FluidSample& b = j + 1 < fs.size() ? fs[j + 1] : fs[j];
        const double w = b.t > a.t ? std::clamp((s.t - a.t) / (b.t - a.t), 0.0, 1.0) : 0.0;
        auto lerp = [w](double x, double y) { return x + w * (y - x); };

        const OccupancyState& o = s.occupancy;
        track(std::abs(o.q1() - lerp(a.state.q1(), b.state.q1())), s.t, rep.sup_q1, rep.t_q1);
        track(std::abs(o.delta0 - lerp(a.state.delta0, b.state.delta0)), s.t, rep.sup_delta0,
              rep.t_delta0);
        track(std::abs(o.delta1 - lerp(a.state.delta1, b.state.delta1)), s.t, rep.sup_delta1,
              rep.t_delta1);
        ++rep.points;
    }
    if (rep.points == 0) throw std::invalid_argument("compare: disjoint time ranges");
    return rep;
}

}  // namespace tabs
