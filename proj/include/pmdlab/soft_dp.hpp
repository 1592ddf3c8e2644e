#pragma once

#include <span>

#include "pmdlab/mdp.hpp"
#include "pmdlab/random.hpp"
#include "pmdlab/table.hpp"

namespace pmdlab {

/// Tolerance used when checking that a vector is a probability distribution.
inline constexpr double kDistributionTolerance = 1e-9;

/// h(p) = sum_a p(a) log p(a) with 0 log 0 = 0. Throws NotADistribution.
double neg_entropy(std::span<const double> p);

/// KL(p || q) = p . (log p - log q). Throws SupportMismatch when p is not
/// absolutely continuous w.r.t. q.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// log sum_i exp(x_i), shifted by the max entry.
double log_sum_exp(std::span<const double> x);

/// Writes softmax(x / temperature) into out, shifted by the max entry.
void softmax_into(std::span<const double> x, double temperature, std::span<double> out);

void check_policy(const PolicyTable& pi, std::size_t n_states, std::size_t n_actions);

/// V(s) = E_{a ~ pi(s)}[f(s, a)] - tau h(pi(s)).
VTable soft_state_values(const PolicyTable& pi, const QTable& f, double tau);

/// V(s) = tau log sum_a exp(f(s, a) / tau), the closed-form max over the simplex.
VTable soft_max_values(const QTable& f, double tau);

/// Q(s, a) = R(s, a) + gamma E_{s'}[v(s')].
QTable backup(const TabularMdp& mdp, const VTable& v);

/// (T^pi_tau f)(s, a) = R(s, a) + gamma E_{s', a'}[f(s', a') - tau h(pi(s'))].
/// tau = 0 gives the unregularized evaluation operator.
QTable bellman_policy_op(const TabularMdp& mdp, double tau, const PolicyTable& pi, const QTable& f);

/// (T*_tau f)(s, a) = R(s, a) + gamma E_{s'}[tau log sum_a' exp(f(s', a') / tau)].
QTable bellman_optimality_op(const TabularMdp& mdp, double tau, const QTable& f);

/// R-bar = (R_x + gamma tau log|A|) / (1 - gamma); bounds |Q^pi_tau| for every pi.
double q_upper_bound(const TabularMdp& mdp, double tau);

struct EvalOptions {
    double tol = 1e-10;
    /// 0 selects ceil(log(tol (1 - gamma) / R-bar) / log gamma) + 100.
    int max_iter = 0;
};

int default_max_iter(const TabularMdp& mdp, double tau, double tol);

/// Fixed-point iteration from Q = 0 until ||T Q - Q||_inf <= tol.
QTable evaluate_policy_exact(const TabularMdp& mdp, double tau, const PolicyTable& pi,
                             const EvalOptions& options = {});

struct OptimalSolution {
    QTable q;
    PolicyTable policy;
};

/// Soft value iteration from Q = 0; the policy is softmax(Q* / tau).
OptimalSolution solve_optimal(const TabularMdp& mdp, double tau, const EvalOptions& options = {});

enum class NoiseMode { Uniform, SignedMax };

struct NoiseSpec {
    double eps_eval = 0.0;
    RngSeed seed{};
    NoiseMode mode = NoiseMode::Uniform;
};

/// Adds per-entry noise bounded by eps_eval in sup norm.
QTable perturb(const QTable& q, const NoiseSpec& noise);

QTable evaluate_policy_noisy(const TabularMdp& mdp, double tau, const PolicyTable& pi,
                             const EvalOptions& options, const NoiseSpec& noise);

}  // namespace pmdlab
