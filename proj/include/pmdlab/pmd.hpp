#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <string_view>
#include <vector>

#include "pmdlab/mdp.hpp"
#include "pmdlab/soft_dp.hpp"
#include "pmdlab/table.hpp"
#include "pmdlab/theory.hpp"

namespace pmdlab {

enum class Variant { Exact, Vanilla, WeightCorrected };

std::string_view to_string(Variant variant) noexcept;
std::optional<Variant> parse_variant(std::string_view text) noexcept;

/// Regularization weights and memory of one PMD run. alpha = 1 / (eta + tau)
/// and beta = eta / (eta + tau) are always derived, never stored.
class PmdConfig {
public:
    /// Exact requires unbounded memory (nullopt); the finite-memory variants need M >= 1.
    PmdConfig(double tau, double eta, std::optional<std::size_t> memory, Variant variant);

    /// Picks eta so that eta / (eta + tau) = beta.
    static PmdConfig from_beta(double tau, double beta, std::optional<std::size_t> memory,
                               Variant variant);

    double tau() const noexcept { return tau_; }
    double eta() const noexcept { return eta_; }
    double alpha() const noexcept { return 1.0 / (eta_ + tau_); }
    double beta() const noexcept { return eta_ / (eta_ + tau_); }
    std::optional<std::size_t> memory() const noexcept { return memory_; }
    Variant variant() const noexcept { return variant_; }

    /// beta^M, 0 for unbounded memory.
    double beta_to_memory() const { return theory::beta_power(beta(), memory_); }

    /// Same weights with a different entropy weight (used by annealing schedules).
    PmdConfig with_tau(double tau) const { return PmdConfig(tau, eta_, memory_, variant_); }

private:
    double tau_;
    double eta_;
    std::optional<std::size_t> memory_;
    Variant variant_;
};

/// Bounded FIFO of Q-tables, newest first. Pushing into a full stack evicts
/// the oldest entry.
class QStack {
public:
    explicit QStack(std::optional<std::size_t> capacity) : capacity_(capacity) {}

    /// Returns the evicted table, if any.
    std::optional<QTable> push(QTable q);

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    bool full() const noexcept { return capacity_ && entries_.size() == *capacity_; }
    std::optional<std::size_t> capacity() const noexcept { return capacity_; }

    /// i = 0 is the newest entry.
    const QTable& at(std::size_t i) const { return entries_.at(i); }
    const QTable& newest() const { return entries_.front(); }
    const QTable& oldest() const { return entries_.back(); }

private:
    std::optional<std::size_t> capacity_;
    std::deque<QTable> entries_;
};

/// Exact / Vanilla: alpha sum_i beta^i Q_{newest - i}.
/// WeightCorrected: alpha / (1 - beta^M) sum_{i < M} beta^i Q_{newest - i}.
Logits logits_from_stack(const QStack& stack, const PmdConfig& cfg);

/// Row-wise softmax with max subtraction. Throws NonFiniteLogits.
PolicyTable softmax_policy(const Logits& logits);

/// One row of the per-iteration diagnostics. Row k describes pi_k and its
/// evaluation; the improvement columns compare Q_k with the evaluated
/// Q~_{k-1} and are 0 on the first row.
struct IterationRecord {
    std::size_t iter = 0;
    /// ||Q* - Q~_k||_inf
    double q_gap_inf = 0.0;
    double thm_bound = 0.0;
    /// min_{s,a} (Q_k - Q~_{k-1})
    double improvement_gap = 0.0;
    /// Magnitude of the variant's own improvement lower bound for this step.
    double improvement_bound = 0.0;
    /// Magnitude of the generic approximate-improvement bound for this step.
    double improvement_bound_generic = 0.0;
    /// max_s ||pi_k(s) - pi~_k(s)||_1
    double pinsker_lhs = 0.0;
    double pinsker_rhs = 0.0;
    /// ||xi_k - xi~_k||_inf
    double xi_delta_inf = 0.0;
    /// ||Q~_k - Q~_{k-M}||_inf, with Q~_{k-M} = 0 before the stack fills.
    double qdiff_inf = 0.0;
    /// ||Q~_k - Q_k||_inf
    double eval_error_inf = 0.0;

    double gap_violation() const { return q_gap_inf - thm_bound; }
    double improvement_violation() const { return -improvement_gap - improvement_bound; }
    double pinsker_violation() const { return pinsker_lhs - pinsker_rhs; }
};

using IterationTrace = std::vector<IterationRecord>;

enum class NoiseSeeding { Fresh, Fixed };

struct Evaluation {
    QTable exact;
    /// What the update sees: exact plus the configured noise.
    QTable used;
};

/// Exact-or-noisy policy evaluation handle. With Fresh seeding iteration k
/// draws noise from derive_seed(seed, k); Fixed reuses the same stream.
class PolicyEvaluator {
public:
    explicit PolicyEvaluator(EvalOptions options = {}, std::optional<NoiseSpec> noise = std::nullopt,
                             NoiseSeeding seeding = NoiseSeeding::Fresh)
        : options_(options), noise_(noise), seeding_(seeding) {}

    Evaluation evaluate(const TabularMdp& mdp, double tau, const PolicyTable& pi,
                        std::size_t iteration) const;

    double tol() const noexcept { return options_.tol; }
    double eps_eval() const noexcept { return noise_ ? noise_->eps_eval : 0.0; }
    const EvalOptions& options() const noexcept { return options_; }

private:
    EvalOptions options_;
    std::optional<NoiseSpec> noise_;
    NoiseSeeding seeding_;
};

struct PmdState {
    std::size_t iteration = 0;
    QStack stack{std::nullopt};
    Logits logits;
    PolicyTable policy;
    IterationTrace trace;

    /// Q* used for the gap column; the gap and bound columns are NaN without it.
    std::optional<QTable> qstar;

    // Carried between steps so that row k can compare Q_k against step k-1.
    double pending_bound = 0.0;
    double pending_generic_bound = 0.0;
    double q0_gap_norm = 0.0;
    std::optional<theory::XkRecurrence> xk;
};

/// xi_0 = 0, pi_0 uniform, empty stack of the variant's capacity.
PmdState initial_state(const TabularMdp& mdp, const PmdConfig& cfg,
                       std::optional<QTable> qstar = std::nullopt);

/// Evaluate pi_k, push onto the stack, recompute logits and policy, append
/// a trace row. The Exact variant keeps xi <- beta xi + alpha Q and stores
/// only the newest table.
PmdState pmd_step(const TabularMdp& mdp, const PmdConfig& cfg, PmdState state,
                  const PolicyEvaluator& evaluator);

PmdState run_pmd(const TabularMdp& mdp, const PmdConfig& cfg, const PolicyEvaluator& evaluator,
                 std::size_t iterations, std::optional<QTable> qstar = std::nullopt);

struct DeletedPolicy {
    Logits logits;
    PolicyTable policy;
};

/// Reference policy pi~_k for which xi_{k+1} = beta xi~_k + alpha Q~_k.
/// Vanilla: xi~ = xi - alpha beta^{M-1} Q~_{k-M}.
/// WeightCorrected: xi~ = xi + alpha beta^{M-1} / (1 - beta^M) (Q~_k - Q~_{k-M}).
/// q_current is Q~_k (ignored by Vanilla). Throws VariantMismatch for Exact.
DeletedPolicy deleted_policy(const PmdState& state, const PmdConfig& cfg, const QTable& q_current);

struct ClosedFormReport {
    std::vector<double> closed_form;
    std::vector<double> grid_argmax;
    double closed_form_objective = 0.0;
    double grid_objective = 0.0;
    double total_variation = 0.0;
    /// TV <= max(grid_resolution * |A|, 1e-3)
    bool within_contract = false;
};

/// Compares pi_prev^beta exp(alpha Q) against brute-force maximization of
/// Q . p - tau h(p) - eta KL(p; pi_prev) over a simplex grid at one state.
ClosedFormReport check_closed_form_update(const QTable& q, const PolicyTable& prev_policy, double tau,
                                          double eta, std::size_t state_index,
                                          double grid_resolution);

/// The closed-form solution alone, for one state.
std::vector<double> closed_form_update(std::span<const double> q, std::span<const double> prev,
                                       double tau, double eta);

/// Checks the generic improvement bound against a random reference
/// policy each iteration: xi~ = xi - X with X uniform in [-scale, scale],
/// xi_{k+1} = beta xi~ + alpha Q~_k. The trace carries the generic bound in
/// both improvement columns; thm_bound is +inf.
IterationTrace run_improvement_audit(const TabularMdp& mdp, const PmdConfig& cfg,
                                     const PolicyEvaluator& evaluator, std::size_t iterations,
                                     double perturbation_scale, RngSeed seed,
                                     std::optional<QTable> qstar = std::nullopt);

}  // namespace pmdlab
