#include "pmdlab/pmd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pmdlab/error.hpp"
#include "pmdlab/format.hpp"

namespace pmdlab {

std::string_view to_string(Variant variant) noexcept {
    switch (variant) {
        case Variant::Exact: return "exact";
        case Variant::Vanilla: return "vanilla";
        case Variant::WeightCorrected: return "weight-corrected";
    }
    return "unknown";
}

std::optional<Variant> parse_variant(std::string_view text) noexcept {
    if (text == "exact" || text == "exact-epmd") return Variant::Exact;
    if (text == "vanilla") return Variant::Vanilla;
    if (text == "weight-corrected" || text == "wc") return Variant::WeightCorrected;
    return std::nullopt;
}

PmdConfig::PmdConfig(double tau, double eta, std::optional<std::size_t> memory, Variant variant)
    : tau_(tau), eta_(eta), memory_(memory), variant_(variant) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(ErrorKind::TauNonPositive, "tau must be > 0");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw Error(ErrorKind::InvalidArgument, "eta must be > 0");
    if (variant == Variant::Exact) {
        if (memory) throw Error(ErrorKind::VariantMismatch, "the exact variant has unbounded memory");
    } else if (!memory || *memory < 1) {
        throw Error(ErrorKind::VariantMismatch, "finite-memory variants need M >= 1");
    }
}

PmdConfig PmdConfig::from_beta(double tau, double beta, std::optional<std::size_t> memory,
                               Variant variant) {
    if (!(beta > 0.0 && beta < 1.0)) throw Error(ErrorKind::InvalidArgument, "beta must lie in (0, 1)");
    return PmdConfig(tau, beta * tau / (1.0 - beta), memory, variant);
}

std::optional<QTable> QStack::push(QTable q) {
    if (!entries_.empty() && !entries_.front().same_shape(q)) {
        throw Error(ErrorKind::ShapeMismatch, "Q-table shape differs from the stack");
    }
    entries_.push_front(std::move(q));
    if (capacity_ && entries_.size() > *capacity_) {
        QTable evicted = std::move(entries_.back());
        entries_.pop_back();
        return evicted;
    }
    return std::nullopt;
}

Logits logits_from_stack(const QStack& stack, const PmdConfig& cfg) {
    if (stack.empty()) throw Error(ErrorKind::EmptyStack, "logits need at least one Q-table");
    const double beta = cfg.beta();
    double scale = cfg.alpha();
    if (cfg.variant() == Variant::WeightCorrected) scale /= 1.0 - cfg.beta_to_memory();
    Logits out(stack.newest().n_states(), stack.newest().n_actions(), 0.0);
    auto acc = out.values();
    double weight = scale;
    for (std::size_t i = 0; i < stack.size(); ++i) {
        auto q = stack.at(i).values();
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += weight * q[j];
        weight *= beta;
    }
    return out;
}

PolicyTable softmax_policy(const Logits& logits) {
    for (double v : logits.values()) {
        if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteLogits, "logits contain inf or nan");
    }
    PolicyTable pi(logits.n_states(), logits.n_actions());
    for (std::size_t s = 0; s < logits.n_states(); ++s) softmax_into(logits.row(s), 1.0, pi.row(s));
    return pi;
}

Evaluation PolicyEvaluator::evaluate(const TabularMdp& mdp, double tau, const PolicyTable& pi,
                                     std::size_t iteration) const {
    Evaluation ev{evaluate_policy_exact(mdp, tau, pi, options_), {}};
    if (!noise_ || noise_->eps_eval == 0.0) {
        ev.used = ev.exact;
        return ev;
    }
    NoiseSpec spec = *noise_;
    if (seeding_ == NoiseSeeding::Fresh) spec.seed = derive_seed(spec.seed, iteration);
    ev.used = perturb(ev.exact, spec);
    return ev;
}

PmdState initial_state(const TabularMdp& mdp, const PmdConfig& cfg, std::optional<QTable> qstar) {
    PmdState state;
    state.stack = QStack(cfg.variant() == Variant::Exact ? std::optional<std::size_t>(1) : cfg.memory());
    state.logits = Logits(mdp.n_states, mdp.n_actions, 0.0);
    state.policy = softmax_policy(state.logits);
    if (qstar && (qstar->n_states() != mdp.n_states || qstar->n_actions() != mdp.n_actions)) {
        throw Error(ErrorKind::ShapeMismatch, "Q* shape does not match the MDP");
    }
    state.qstar = std::move(qstar);
    return state;
}

DeletedPolicy deleted_policy(const PmdState& state, const PmdConfig& cfg, const QTable& q_current) {
    const auto& memory = cfg.memory();
    if (cfg.variant() == Variant::Exact || !memory) {
        throw Error(ErrorKind::VariantMismatch, "the exact variant deletes nothing");
    }
    const double bm1 = theory::beta_power(cfg.beta(), *memory - 1);
    // Q~_{k-M} is the oldest stored table once the stack holds M entries; 0 before.
    const bool has_oldest = state.stack.full();
    Logits tilde = state.logits;
    if (cfg.variant() == Variant::Vanilla) {
        if (has_oldest) tilde.add_scaled(Logits(state.stack.oldest()), -cfg.alpha() * bm1);
    } else {
        const double c = cfg.alpha() * bm1 / (1.0 - cfg.beta_to_memory());
        tilde.add_scaled(Logits(q_current), c);
        if (has_oldest) tilde.add_scaled(Logits(state.stack.oldest()), -c);
    }
    PolicyTable pi = softmax_policy(tilde);
    return {std::move(tilde), std::move(pi)};
}

namespace {

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

double thm_bound_at(const PmdState& state, const PmdConfig& cfg, const TabularMdp& mdp,
                    double qstar_norm, double eps_eval, std::size_t k, double q0_norm) {
    const double gamma = mdp.gamma;
    const double beta = cfg.beta();
    const double rbar = q_upper_bound(mdp, cfg.tau());
    switch (cfg.variant()) {
        case Variant::Exact:
            if (eps_eval > 0.0) {
                return theory::vanilla_bound(static_cast<int>(k), gamma, beta, std::nullopt, rbar,
                                             qstar_norm, eps_eval);
            }
            if (k == 0) return qstar_norm + q0_norm;
            return theory::exact_epmd_bound(static_cast<int>(k), gamma, beta, qstar_norm,
                                            state.q0_gap_norm);
        case Variant::Vanilla:
            return theory::vanilla_bound(static_cast<int>(k), gamma, beta, cfg.memory(), rbar,
                                         qstar_norm, eps_eval);
        case Variant::WeightCorrected: return state.xk ? state.xk->value() : nan();
    }
    return nan();
}

}  // namespace

PmdState pmd_step(const TabularMdp& mdp, const PmdConfig& cfg, PmdState state,
                  const PolicyEvaluator& evaluator) {
    const std::size_t k = state.iteration;
    const double gamma = mdp.gamma;
    const double eps = evaluator.eps_eval();
    const double rbar = q_upper_bound(mdp, cfg.tau());

    Evaluation ev = evaluator.evaluate(mdp, cfg.tau(), state.policy, k);
    IterationRecord rec;
    rec.iter = k;
    rec.eval_error_inf = sup_distance(ev.used, ev.exact);

    if (k > 0) {
        rec.improvement_gap = min_difference(ev.exact, state.stack.newest());
        rec.improvement_bound = state.pending_bound;
        rec.improvement_bound_generic = state.pending_generic_bound;
    }

    // Reference policy diagnostics for pi_k, and the bound the next row is checked against.
    const QTable zero(mdp.n_states, mdp.n_actions, 0.0);
    const QTable& lagged = state.stack.full() && cfg.variant() != Variant::Exact ? state.stack.oldest() : zero;
    rec.qdiff_inf = cfg.variant() == Variant::Exact ? 0.0 : sup_distance(ev.used, lagged);
    switch (cfg.variant()) {
        case Variant::Exact:
            state.pending_bound = theory::eval_improvement_term(gamma, eps);
            break;
        case Variant::Vanilla: {
            DeletedPolicy ref = deleted_policy(state, cfg, ev.used);
            rec.pinsker_lhs = max_l1_distance(state.policy, ref.policy);
            rec.xi_delta_inf = sup_distance(state.logits, ref.logits);
            rec.pinsker_rhs = cfg.alpha() * theory::beta_power(cfg.beta(), *cfg.memory() - 1) * (rbar + eps);
            state.pending_bound = theory::api_bound_vanilla(gamma, cfg.beta(), cfg.memory(), cfg.alpha(), rbar, eps);
            break;
        }
        case Variant::WeightCorrected: {
            DeletedPolicy ref = deleted_policy(state, cfg, ev.used);
            rec.pinsker_lhs = max_l1_distance(state.policy, ref.policy);
            rec.xi_delta_inf = sup_distance(state.logits, ref.logits);
            const double c = cfg.alpha() * theory::beta_power(cfg.beta(), *cfg.memory() - 1) /
                             (1.0 - cfg.beta_to_memory());
            rec.pinsker_rhs = std::min(2.0, c * rec.qdiff_inf);
            state.pending_bound = theory::api_bound_wc(gamma, cfg.beta(), *cfg.memory(), rec.qdiff_inf, eps);
            break;
        }
    }
    state.pending_generic_bound =
        theory::api_bound_generic(gamma, cfg.eta(), rec.pinsker_lhs, rec.xi_delta_inf, eps);

    if (state.qstar) {
        const double qstar_norm = sup_norm(*state.qstar);
        const double q0_norm = sup_norm(ev.exact);
        if (k == 0) {
            state.q0_gap_norm = sup_distance(*state.qstar, ev.exact);
            if (cfg.variant() == Variant::WeightCorrected) {
                state.xk.emplace(theory::XkParams{gamma, cfg.beta(), *cfg.memory(), qstar_norm, q0_norm, eps});
            }
        } else if (state.xk) {
            state.xk->step();
        }
        rec.q_gap_inf = sup_distance(*state.qstar, ev.used);
        rec.thm_bound = thm_bound_at(state, cfg, mdp, qstar_norm, eps, k, q0_norm);
    } else {
        rec.q_gap_inf = nan();
        rec.thm_bound = nan();
    }

    if (cfg.variant() == Variant::Exact) {
        state.logits *= cfg.beta();
        state.logits.add_scaled(Logits(ev.used), cfg.alpha());
        state.stack.push(std::move(ev.used));
    } else {
        state.stack.push(std::move(ev.used));
        state.logits = logits_from_stack(state.stack, cfg);
    }
    state.policy = softmax_policy(state.logits);
    state.trace.push_back(rec);
    ++state.iteration;
    return state;
}

PmdState run_pmd(const TabularMdp& mdp, const PmdConfig& cfg, const PolicyEvaluator& evaluator,
                 std::size_t iterations, std::optional<QTable> qstar) {
    PmdState state = initial_state(mdp, cfg, std::move(qstar));
    state.trace.reserve(iterations);
    for (std::size_t i = 0; i < iterations; ++i) state = pmd_step(mdp, cfg, std::move(state), evaluator);
    return state;
}

std::vector<double> closed_form_update(std::span<const double> q, std::span<const double> prev,
                                       double tau, double eta) {
    if (q.size() != prev.size()) throw Error(ErrorKind::ShapeMismatch, "Q row and policy row differ");
    const double alpha = 1.0 / (eta + tau);
    const double beta = eta * alpha;
    std::vector<double> logits(q.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < q.size(); ++a) {
        logits[a] = prev[a] > 0.0 ? beta * std::log(prev[a]) + alpha * q[a]
                                  : -std::numeric_limits<double>::infinity();
        top = std::max(top, logits[a]);
    }
    std::vector<double> out(q.size(), 0.0);
    double sum = 0.0;
    for (std::size_t a = 0; a < q.size(); ++a) {
        out[a] = prev[a] > 0.0 ? std::exp(logits[a] - top) : 0.0;
        sum += out[a];
    }
    for (double& v : out) v /= sum;
    return out;
}

namespace {

struct UpdateObjective {
    std::span<const double> q;
    std::vector<double> log_prev;
    double tau;
    double eta;

    /// Q . p - tau h(p) - eta KL(p; prev); -inf off the support of prev.
    double operator()(std::span<const double> p) const {
        double value = 0.0;
        for (std::size_t a = 0; a < p.size(); ++a) {
            if (p[a] == 0.0) continue;
            if (!std::isfinite(log_prev[a])) return -std::numeric_limits<double>::infinity();
            const double lp = std::log(p[a]);
            value += p[a] * (q[a] - (tau + eta) * lp + eta * log_prev[a]);
        }
        return value;
    }
};

template <class Visit>
void for_each_grid_point(std::size_t n_actions, std::size_t steps, std::vector<std::size_t>& counts,
                         std::size_t pos, std::size_t remaining, Visit&& visit) {
    if (pos + 1 == n_actions) {
        counts[pos] = remaining;
        visit(counts);
        return;
    }
    for (std::size_t c = 0; c <= remaining; ++c) {
        counts[pos] = c;
        for_each_grid_point(n_actions, steps, counts, pos + 1, remaining - c, visit);
    }
}

}  // namespace

ClosedFormReport check_closed_form_update(const QTable& q, const PolicyTable& prev_policy, double tau,
                                          double eta, std::size_t state_index,
                                          double grid_resolution) {
    if (!q.same_shape(prev_policy)) throw Error(ErrorKind::ShapeMismatch, "Q and policy differ in shape");
    if (state_index >= q.n_states()) throw Error(ErrorKind::InvalidArgument, "state index out of range");
    const std::size_t n_actions = q.n_actions();
    if (n_actions > 4) {
        throw Error(ErrorKind::ActionSpaceTooLarge, "simplex grid search supports |A| <= 4");
    }
    if (!(grid_resolution > 0.0 && grid_resolution <= 1e-2)) {
        throw Error(ErrorKind::InvalidArgument, "grid resolution must lie in (0, 1e-2]");
    }
    if (!(tau > 0.0)) throw Error(ErrorKind::TauNonPositive, "tau must be > 0");
    if (!(eta > 0.0)) throw Error(ErrorKind::InvalidArgument, "eta must be > 0");

    auto q_row = q.row(state_index);
    auto prev_row = prev_policy.row(state_index);
    UpdateObjective objective{q_row, std::vector<double>(n_actions), tau, eta};
    for (std::size_t a = 0; a < n_actions; ++a) {
        objective.log_prev[a] = prev_row[a] > 0.0 ? std::log(prev_row[a])
                                                  : -std::numeric_limits<double>::infinity();
    }

    ClosedFormReport report;
    report.closed_form = closed_form_update(q_row, prev_row, tau, eta);
    report.closed_form_objective = objective(report.closed_form);

    const auto steps = static_cast<std::size_t>(std::llround(1.0 / grid_resolution));
    const double unit = 1.0 / static_cast<double>(steps);
    std::vector<std::size_t> counts(n_actions, 0);
    std::vector<double> p(n_actions, 0.0);
    report.grid_objective = -std::numeric_limits<double>::infinity();
    report.grid_argmax.assign(n_actions, 0.0);
    for_each_grid_point(n_actions, steps, counts, 0, steps, [&](const std::vector<std::size_t>& c) {
        for (std::size_t a = 0; a < n_actions; ++a) p[a] = static_cast<double>(c[a]) * unit;
        const double value = objective(p);
        if (value > report.grid_objective) {
            report.grid_objective = value;
            report.grid_argmax = p;
        }
    });

    double l1 = 0.0;
    for (std::size_t a = 0; a < n_actions; ++a) l1 += std::abs(report.closed_form[a] - report.grid_argmax[a]);
    report.total_variation = 0.5 * l1;
    report.within_contract =
        report.total_variation <= std::max(grid_resolution * static_cast<double>(n_actions), 1e-3);
    return report;
}

IterationTrace run_improvement_audit(const TabularMdp& mdp, const PmdConfig& cfg,
                                     const PolicyEvaluator& evaluator, std::size_t iterations,
                                     double perturbation_scale, RngSeed seed,
                                     std::optional<QTable> qstar) {
    if (!(perturbation_scale >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "perturbation scale must be >= 0");
    }
    const double gamma = mdp.gamma;
    const double eps = evaluator.eps_eval();
    Rng rng(seed);
    Logits logits(mdp.n_states, mdp.n_actions, 0.0);
    PolicyTable policy = softmax_policy(logits);
    std::optional<QTable> previous;
    double pending = 0.0;
    IterationTrace trace;
    trace.reserve(iterations);
    for (std::size_t k = 0; k < iterations; ++k) {
        Evaluation ev = evaluator.evaluate(mdp, cfg.tau(), policy, k);
        IterationRecord rec;
        rec.iter = k;
        rec.eval_error_inf = sup_distance(ev.used, ev.exact);
        rec.thm_bound = std::numeric_limits<double>::infinity();
        rec.q_gap_inf = qstar ? sup_distance(*qstar, ev.used) : nan();
        if (previous) {
            rec.improvement_gap = min_difference(ev.exact, *previous);
            rec.improvement_bound = pending;
            rec.improvement_bound_generic = pending;
        }
        Logits perturbation(mdp.n_states, mdp.n_actions);
        for (double& v : perturbation.values()) v = rng.uniform(-perturbation_scale, perturbation_scale);
        Logits tilde = logits - perturbation;
        PolicyTable ref = softmax_policy(tilde);
        rec.pinsker_lhs = max_l1_distance(policy, ref);
        rec.xi_delta_inf = sup_norm(perturbation);
        rec.pinsker_rhs = std::min(2.0, rec.xi_delta_inf);
        pending = theory::api_bound_generic(gamma, cfg.eta(), rec.pinsker_lhs, rec.xi_delta_inf, eps);

        logits = cfg.beta() * tilde;
        logits.add_scaled(Logits(ev.used), cfg.alpha());
        policy = softmax_policy(logits);
        previous = std::move(ev.used);
        trace.push_back(rec);
    }
    return trace;
}

}  // namespace pmdlab
