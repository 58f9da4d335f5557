#include "tabs/oracle.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace tabs::oracle {

TruncatedStateSpace::TruncatedStateSpace(std::size_t servers, std::uint64_t buffer)
    : servers_(servers), buffer_(buffer), radix_(static_cast<std::size_t>(buffer) + 3), size_(1) {
    if (servers == 0 || buffer == 0) throw std::invalid_argument("oracle needs N >= 1 and B >= 1");
    if (servers > max_servers || buffer > max_buffer) {
        throw StateSpaceTooLarge(
            fmt::format("oracle limited to N <= {}, B <= {}", max_servers, max_buffer));
    }
    for (std::size_t i = 0; i < servers; ++i) size_ *= radix_;
    if (size_ > max_states) {
        throw StateSpaceTooLarge(fmt::format("{} states exceed the {} guard", size_, max_states));
    }
}

// Local codes: 0..B-1 busy with code+1 tasks, B idle-on, B+1 idle-off, B+2 setup.
std::size_t TruncatedStateSpace::local(const ServerState& s) const {
    const auto b = static_cast<std::size_t>(buffer_);
    switch (s.mode) {
    case ServerMode::Busy:
        if (s.infinite || s.queue_len < 1 || s.queue_len > buffer_) {
            throw std::invalid_argument("busy queue outside 1..B");
        }
        return static_cast<std::size_t>(s.queue_len - 1);
    case ServerMode::IdleOn: return b;
    case ServerMode::IdleOff: return b + 1;
    case ServerMode::Setup: return b + 2;
    }
    return 0;
}

ServerState TruncatedStateSpace::unlocal(std::size_t code) const {
    const auto b = static_cast<std::size_t>(buffer_);
    if (code < b) return {ServerMode::Busy, code + 1, false, 0};
    if (code == b) return {ServerMode::IdleOn, 0, false, 0};
    if (code == b + 1) return {ServerMode::IdleOff, 0, false, 0};
    return {ServerMode::Setup, 0, false, 0};
}

std::vector<ServerState> TruncatedStateSpace::decode(std::size_t index) const {
    if (index >= size_) throw std::out_of_range("state index");
    std::vector<ServerState> out(servers_);
    for (std::size_t j = 0; j < servers_; ++j) {
        out[j] = unlocal(index % radix_);
        index /= radix_;
    }
    return out;
}

std::size_t TruncatedStateSpace::encode(const std::vector<ServerState>& state) const {
    if (state.size() != servers_) throw std::invalid_argument("server count mismatch");
    std::size_t index = 0;
    for (std::size_t j = servers_; j-- > 0;) index = index * radix_ + local(state[j]);
    return index;
}

GeneratorMatrix build_generator(const TruncatedStateSpace& space, double lambda, double mu,
                                double nu) {
    if (!(lambda > 0 && mu > 0 && nu > 0)) throw std::invalid_argument("rates must be positive");
    const std::size_t n = space.size();
    const std::size_t servers = space.servers();
    const std::uint64_t cap = space.buffer();
    const double arrival_rate = lambda * static_cast<double>(servers);

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(n * (servers * servers + 4));
    std::vector<double> out_rate(n, 0.0);

    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<ServerState> st = space.decode(i);
        auto add = [&](const std::vector<ServerState>& to, double rate) {
            const std::size_t j = space.encode(to);
            if (j == i || rate <= 0.0) return;
            trip.emplace_back(static_cast<int>(i), static_cast<int>(j), rate);
            out_rate[i] += rate;
        };

        std::vector<std::size_t> green, busy, red;
        for (std::size_t s = 0; s < servers; ++s) {
            switch (st[s].mode) {
            case ServerMode::IdleOn: green.push_back(s); break;
            case ServerMode::Busy: busy.push_back(s); break;
            case ServerMode::IdleOff: red.push_back(s); break;
            case ServerMode::Setup: break;
            }
        }

        // Arrivals.
        if (!green.empty()) {
            const double r = arrival_rate / static_cast<double>(green.size());
            for (std::size_t g : green) {
                auto to = st;
                to[g] = {ServerMode::Busy, 1, false, 0};
                add(to, r);
            }
        } else {
            // Joint choice of receiving busy server (or none) and red server (or none).
            const std::size_t nb = std::max<std::size_t>(busy.size(), 1);
            const std::size_t nr = std::max<std::size_t>(red.size(), 1);
            const double r = arrival_rate / static_cast<double>(nb * nr);
            for (std::size_t a = 0; a < nb; ++a) {
                for (std::size_t c = 0; c < nr; ++c) {
                    auto to = st;
                    if (!busy.empty() && to[busy[a]].queue_len < cap) ++to[busy[a]].queue_len;
                    if (!red.empty()) to[red[c]] = {ServerMode::Setup, 0, false, 0};
                    add(to, r);
                }
            }
        }

        for (std::size_t s = 0; s < servers; ++s) {
            auto to = st;
            switch (st[s].mode) {
            case ServerMode::Busy:
                if (st[s].queue_len == 1) {
                    to[s] = {ServerMode::IdleOn, 0, false, 0};
                } else {
                    --to[s].queue_len;
                }
                add(to, 1.0);
                break;
            case ServerMode::IdleOn:
                to[s] = {ServerMode::IdleOff, 0, false, 0};
                add(to, mu);
                break;
            case ServerMode::Setup:
                to[s] = {ServerMode::IdleOn, 0, false, 0};
                add(to, nu);
                break;
            case ServerMode::IdleOff: break;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        trip.emplace_back(static_cast<int>(i), static_cast<int>(i), -out_rate[i]);
    }

    GeneratorMatrix gen;
    gen.q.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    gen.q.setFromTriplets(trip.begin(), trip.end());
    gen.q.makeCompressed();
    return gen;
}

namespace {

using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

std::vector<bool> reachable(const RowSparse& adj, std::size_t from) {
    std::vector<bool> seen(static_cast<std::size_t>(adj.rows()), false);
    std::vector<std::size_t> stack{from};
    seen[from] = true;
    while (!stack.empty()) {
        const auto i = static_cast<Eigen::Index>(stack.back());
        stack.pop_back();
        for (RowSparse::InnerIterator it(adj, i); it; ++it) {
            const auto j = static_cast<std::size_t>(it.col());
            if (it.value() > 0.0 && !seen[j]) {
                seen[j] = true;
                stack.push_back(j);
            }
        }
    }
    return seen;
}

constexpr std::size_t dense_limit = 3000;

}  // namespace

Eigen::VectorXd stationary(const GeneratorMatrix& gen) {
    const auto n = gen.q.rows();
    if (n == 0 || gen.q.cols() != n) throw std::invalid_argument("generator must be square and non-empty");

    const RowSparse transposed = RowSparse(gen.q.transpose());
    const auto fwd = reachable(gen.q, 0);
    const auto bwd = reachable(transposed, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!fwd[static_cast<std::size_t>(i)] || !bwd[static_cast<std::size_t>(i)]) {
            throw Reducible(fmt::format("state {} not mutually reachable with state 0", i));
        }
    }

    // Solve Q^T pi = 0 with the last balance equation replaced by sum(pi) = 1.
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    Eigen::VectorXd pi;
    if (static_cast<std::size_t>(n) <= dense_limit) {
        Eigen::MatrixXd a = gen.dense().transpose();
        a.row(n - 1).setOnes();
        Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
        if (!lu.isInvertible()) throw std::runtime_error("stationary: singular balance system");
        pi = lu.solve(rhs);
    } else {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(gen.q.nonZeros() + n));
        for (Eigen::Index i = 0; i < n; ++i) {
            for (RowSparse::InnerIterator it(gen.q, i); it; ++it) {
                if (it.col() != n - 1) trip.emplace_back(static_cast<int>(it.col()), static_cast<int>(i), it.value());
            }
            trip.emplace_back(static_cast<int>(n - 1), static_cast<int>(i), 1.0);
        }
        Eigen::SparseMatrix<double> a(n, n);
        a.setFromTriplets(trip.begin(), trip.end());
        a.makeCompressed();
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(a);
        if (lu.info() != Eigen::Success) throw std::runtime_error("stationary: sparse LU failed");
        pi = lu.solve(rhs);
        if (lu.info() != Eigen::Success) throw std::runtime_error("stationary: sparse solve failed");
    }
    if (!pi.allFinite()) throw std::runtime_error("stationary: non-finite solution");
    const double res = residual(gen, pi);
    if (res > 1e-10) throw std::runtime_error(fmt::format("stationary: residual {:.3e}", res));
    return pi;
}

double residual(const GeneratorMatrix& gen, const Eigen::VectorXd& pi) {
    const Eigen::VectorXd r = gen.q.transpose() * pi;
    return r.cwiseAbs().maxCoeff();
}

std::size_t mode_key(std::size_t busy, std::size_t idle_off, std::size_t setup,
                     std::size_t servers) {
    const std::size_t m = servers + 1;
    return (busy * m + idle_off) * m + setup;
}

std::vector<double> mode_marginal(const TruncatedStateSpace& space, const Eigen::VectorXd& pi) {
    const std::size_t m = space.servers() + 1;
    std::vector<double> out(m * m * m, 0.0);
    for (std::size_t i = 0; i < space.size(); ++i) {
        std::size_t busy = 0, off = 0, setup = 0;
        for (const ServerState& s : space.decode(i)) {
            busy += s.mode == ServerMode::Busy;
            off += s.mode == ServerMode::IdleOff;
            setup += s.mode == ServerMode::Setup;
        }
        out[mode_key(busy, off, setup, space.servers())] += pi(static_cast<Eigen::Index>(i));
    }
    return out;
}

std::vector<double> max_queue_marginal(const TruncatedStateSpace& space,
                                       const Eigen::VectorXd& pi) {
    std::vector<double> out(static_cast<std::size_t>(space.buffer()) + 1, 0.0);
    for (std::size_t i = 0; i < space.size(); ++i) {
        std::uint64_t mx = 0;
        for (const ServerState& s : space.decode(i)) mx = std::max(mx, s.queue_len);
        out[mx] += pi(static_cast<Eigen::Index>(i));
    }
    return out;
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("total_variation: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return 0.5 * s;
}

}  // namespace tabs::oracle
