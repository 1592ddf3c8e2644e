#include "pmdlab/soft_dp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pmdlab/error.hpp"
#include "pmdlab/format.hpp"

namespace pmdlab {

namespace {

void check_distribution(std::span<const double> p, const char* what) {
    if (p.empty()) throw Error(ErrorKind::NotADistribution, std::string(what) + " is empty");
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw Error(ErrorKind::NotADistribution, std::string(what) + " has a negative entry");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > kDistributionTolerance) {
        throw Error(ErrorKind::NotADistribution, std::string(what) + " sums to " + format_double(sum));
    }
}

double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

double row_neg_entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) h += xlogx(v);
    return h;
}

void check_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw Error(ErrorKind::TauNonPositive, "tau must be positive, got " + format_double(tau));
    }
}

void check_q(const TabularMdp& mdp, const QTable& f) {
    if (f.n_states() != mdp.n_states || f.n_actions() != mdp.n_actions) {
        throw Error(ErrorKind::ShapeMismatch, "Q-table shape does not match the MDP");
    }
}

}  // namespace

double neg_entropy(std::span<const double> p) {
    check_distribution(p, "p");
    return row_neg_entropy(p);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw Error(ErrorKind::ShapeMismatch, "KL arguments differ in length");
    check_distribution(p, "p");
    check_distribution(q, "q");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) {
            throw Error(ErrorKind::SupportMismatch, "p(" + std::to_string(i) + ") > 0 where q is 0");
        }
        kl += p[i] * (std::log(p[i]) - std::log(q[i]));
    }
    return std::max(kl, 0.0);
}

double log_sum_exp(std::span<const double> x) {
    if (x.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(m)) return m;
    double sum = 0.0;
    for (double v : x) sum += std::exp(v - m);
    return m + std::log(sum);
}

void softmax_into(std::span<const double> x, double temperature, std::span<double> out) {
    const double m = *std::max_element(x.begin(), x.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp((x[i] - m) / temperature);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
}

void check_policy(const PolicyTable& pi, std::size_t n_states, std::size_t n_actions) {
    if (pi.n_states() != n_states || pi.n_actions() != n_actions) {
        throw Error(ErrorKind::ShapeMismatch, "policy shape does not match the MDP");
    }
}

VTable soft_state_values(const PolicyTable& pi, const QTable& f, double tau) {
    if (!pi.same_shape(f)) throw Error(ErrorKind::ShapeMismatch, "policy and Q differ in shape");
    VTable v(pi.n_states(), 0.0);
    for (std::size_t s = 0; s < pi.n_states(); ++s) {
        auto p = pi.row(s);
        auto q = f.row(s);
        double expected = 0.0;
        for (std::size_t a = 0; a < p.size(); ++a) {
            if (p[a] > 0.0) expected += p[a] * q[a];
        }
        v[s] = tau == 0.0 ? expected : expected - tau * row_neg_entropy(p);
    }
    return v;
}

VTable soft_max_values(const QTable& f, double tau) {
    check_tau(tau);
    VTable v(f.n_states(), 0.0);
    std::vector<double> scaled(f.n_actions());
    for (std::size_t s = 0; s < f.n_states(); ++s) {
        auto q = f.row(s);
        for (std::size_t a = 0; a < q.size(); ++a) scaled[a] = q[a] / tau;
        v[s] = tau * log_sum_exp(scaled);
    }
    return v;
}

QTable backup(const TabularMdp& mdp, const VTable& v) {
    if (v.size() != mdp.n_states) throw Error(ErrorKind::ShapeMismatch, "V length != |S|");
    QTable out(mdp.n_states, mdp.n_actions);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            auto row = mdp.next_state_probs(s, a);
            double expected = 0.0;
            for (std::size_t t = 0; t < row.size(); ++t) expected += row[t] * v[t];
            out(s, a) = mdp.reward(s, a) + mdp.gamma * expected;
        }
    }
    return out;
}

QTable bellman_policy_op(const TabularMdp& mdp, double tau, const PolicyTable& pi, const QTable& f) {
    if (!(tau >= 0.0)) throw Error(ErrorKind::InvalidArgument, "tau must be nonnegative");
    check_q(mdp, f);
    check_policy(pi, mdp.n_states, mdp.n_actions);
    return backup(mdp, soft_state_values(pi, f, tau));
}

QTable bellman_optimality_op(const TabularMdp& mdp, double tau, const QTable& f) {
    check_tau(tau);
    check_q(mdp, f);
    return backup(mdp, soft_max_values(f, tau));
}

double q_upper_bound(const TabularMdp& mdp, double tau) {
    const double entropy_bonus =
        mdp.n_actions > 1 ? mdp.gamma * tau * std::log(static_cast<double>(mdp.n_actions)) : 0.0;
    return (mdp.reward_bound + entropy_bonus) / (1.0 - mdp.gamma);
}

int default_max_iter(const TabularMdp& mdp, double tau, double tol) {
    const double rbar = q_upper_bound(mdp, tau);
    const double ratio = tol * (1.0 - mdp.gamma) / rbar;
    const double needed = ratio >= 1.0 ? 1.0 : std::ceil(std::log(ratio) / std::log(mdp.gamma));
    return static_cast<int>(needed) + 100;
}

namespace {

template <class Operator>
QTable iterate_to_fixed_point(const TabularMdp& mdp, double tau, const EvalOptions& options,
                              Operator&& apply, const char* name) {
    if (!(options.tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "tol must be positive");
    const int max_iter = options.max_iter > 0 ? options.max_iter : default_max_iter(mdp, tau, options.tol);
    QTable q(mdp.n_states, mdp.n_actions, 0.0);
    double residual = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        QTable next = apply(q);
        residual = sup_distance(next, q);
        q = std::move(next);
        // ||T q_new - q_new|| <= gamma * residual, so stopping here meets tol.
        if (residual <= options.tol) return q;
    }
    throw ConvergenceError(std::string(name) + " did not reach tol " + format_double(options.tol) +
                               "; residual " + format_double(residual),
                           residual, max_iter);
}

}  // namespace

QTable evaluate_policy_exact(const TabularMdp& mdp, double tau, const PolicyTable& pi,
                             const EvalOptions& options) {
    if (!(tau >= 0.0)) throw Error(ErrorKind::InvalidArgument, "tau must be nonnegative");
    check_policy(pi, mdp.n_states, mdp.n_actions);
    // The entropy term does not depend on f, so it is folded into the reward once.
    std::vector<double> entropy(mdp.n_states, 0.0);
    if (tau > 0.0) {
        for (std::size_t s = 0; s < mdp.n_states; ++s) entropy[s] = tau * row_neg_entropy(pi.row(s));
    }
    return iterate_to_fixed_point(
        mdp, tau, options,
        [&](const QTable& q) {
            VTable v(mdp.n_states, 0.0);
            for (std::size_t s = 0; s < mdp.n_states; ++s) {
                double expected = 0.0;
                for (std::size_t a = 0; a < mdp.n_actions; ++a) expected += pi(s, a) * q(s, a);
                v[s] = expected - entropy[s];
            }
            return backup(mdp, v);
        },
        "evaluate_policy_exact");
}

OptimalSolution solve_optimal(const TabularMdp& mdp, double tau, const EvalOptions& options) {
    check_tau(tau);
    QTable q = iterate_to_fixed_point(
        mdp, tau, options, [&](const QTable& f) { return backup(mdp, soft_max_values(f, tau)); },
        "solve_optimal");
    PolicyTable policy(mdp.n_states, mdp.n_actions);
    for (std::size_t s = 0; s < mdp.n_states; ++s) softmax_into(q.row(s), tau, policy.row(s));
    return {std::move(q), std::move(policy)};
}

QTable perturb(const QTable& q, const NoiseSpec& noise) {
    if (!(noise.eps_eval >= 0.0)) throw Error(ErrorKind::InvalidArgument, "eps_eval must be >= 0");
    QTable out = q;
    if (noise.eps_eval == 0.0) return out;
    Rng rng(noise.seed);
    for (double& v : out.values()) {
        switch (noise.mode) {
            case NoiseMode::Uniform: v += noise.eps_eval * (2.0 * rng.uniform() - 1.0); break;
            case NoiseMode::SignedMax: v += rng.coin() ? noise.eps_eval : -noise.eps_eval; break;
        }
    }
    return out;
}

QTable evaluate_policy_noisy(const TabularMdp& mdp, double tau, const PolicyTable& pi,
                             const EvalOptions& options, const NoiseSpec& noise) {
    return perturb(evaluate_policy_exact(mdp, tau, pi, options), noise);
}

}  // namespace pmdlab
