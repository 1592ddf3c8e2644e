#include "pmdlab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pmdlab/error.hpp"

namespace pmdlab::theory {

namespace {

void check_unit_interval(double value, const char* name) {
    if (!(value > 0.0 && value < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, std::string(name) + " must lie in (0, 1)");
    }
}

double power(double base, double exponent) {
    if (base == 0.0) return exponent == 0.0 ? 1.0 : 0.0;
    return std::exp(exponent * std::log(base));
}

}  // namespace

double beta_power(double beta, std::optional<std::size_t> memory) {
    if (!memory) return 0.0;
    return power(beta, static_cast<double>(*memory));
}

double exact_rate(double gamma, double beta) { return beta + gamma * (1.0 - beta); }

double slack(double tol, double gamma) { return 4.0 * tol / (1.0 - gamma); }

double exact_epmd_bound(int k, double gamma, double beta, double qstar_norm, double q0_gap_norm) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "exact_epmd_bound needs k >= 1");
    const double d = exact_rate(gamma, beta);
    return gamma * power(d, k - 1) * (q0_gap_norm + 2.0 * beta * qstar_norm);
}

double vanilla_c1(double gamma, double beta, std::optional<std::size_t> memory, double rbar,
                  double eps_eval) {
    const double bm = beta_power(beta, memory);
    const double base = 2.0 * gamma * rbar / (1.0 - gamma) *
                        (1.0 + gamma * (1.0 - bm) / ((1.0 - beta) * (1.0 - gamma)));
    return base + gamma * eps_eval / ((1.0 - gamma) * (1.0 - beta));
}

double vanilla_bound(int k, double gamma, double beta, std::optional<std::size_t> memory,
                     double rbar, double qstar_norm, double eps_eval) {
    if (k < 0) throw Error(ErrorKind::InvalidArgument, "vanilla_bound needs k >= 0");
    const double d = exact_rate(gamma, beta);
    const double floor = (1.0 + gamma * gamma) * eps_eval /
                         ((1.0 - gamma) * (1.0 - gamma) * (1.0 - beta));
    return gamma * power(d, k) * qstar_norm +
           beta_power(beta, memory) * vanilla_c1(gamma, beta, memory, rbar, eps_eval) + floor;
}

double memory_ratio(double gamma, double beta) {
    return (1.0 - gamma) * (1.0 - gamma) * (1.0 - beta) / (gamma * gamma * (3.0 + beta) + 1.0 - beta);
}

double min_memory_threshold(double gamma, double beta) {
    check_unit_interval(gamma, "gamma");
    check_unit_interval(beta, "beta");
    return std::log(memory_ratio(gamma, beta)) / std::log(beta);
}

std::size_t min_memory(double gamma, double beta) {
    const double t = min_memory_threshold(gamma, beta);
    if (t < 0.0) return 1;
    auto m = static_cast<std::size_t>(std::floor(t)) + 1;
    // beta^M < ratio is the exact condition; guard the floor() against rounding at integers.
    while (m > 1 && beta_power(beta, m - 1) < memory_ratio(gamma, beta)) --m;
    while (!(beta_power(beta, m) < memory_ratio(gamma, beta))) ++m;
    return std::max<std::size_t>(m, 1);
}

WcConstants wc_constants(double gamma, double beta, std::size_t memory) {
    check_unit_interval(gamma, "gamma");
    check_unit_interval(beta, "beta");
    if (memory < 1) throw Error(ErrorKind::InvalidArgument, "memory must be >= 1");
    WcConstants c;
    c.memory = memory;
    const double bm = beta_power(beta, memory);
    c.c1 = bm / (1.0 - bm);
    c.c2 = ((1.0 + gamma) / (1.0 - gamma) - beta) * c.c1;
    c.d1 = beta + gamma * (1.0 - beta) / (1.0 - bm) + gamma * c.c2;
    c.d2 = 2.0 * c.c1 * gamma * gamma / (1.0 - gamma);
    const double m = static_cast<double>(memory);
    const double d1m = power(c.d1, m);
    // (1 - d1^M) / (1 - d1) = sum_{i < M} d1^i, which is M at d1 = 1.
    const double geometric = std::abs(1.0 - c.d1) < 1e-14 ? m : (1.0 - d1m) / (1.0 - c.d1);
    c.d3 = d1m + c.d2 * geometric;
    c.rate = c.d1 + c.d2 / c.d3;
    c.converges = bm < memory_ratio(gamma, beta);
    return c;
}

TheoryConstants theory_constants(double gamma, double beta, std::size_t memory, double rbar,
                                 double eps_eval) {
    TheoryConstants t;
    t.gamma = gamma;
    t.beta = beta;
    t.rbar = rbar;
    t.d = exact_rate(gamma, beta);
    t.c1_vanilla = vanilla_c1(gamma, beta, memory, rbar, eps_eval);
    t.wc = wc_constants(gamma, beta, memory);
    t.threshold = min_memory_threshold(gamma, beta);
    t.min_memory = min_memory(gamma, beta);
    return t;
}

double eval_improvement_term(double gamma, double eps_eval) {
    return (1.0 + gamma) / (1.0 - gamma) * eps_eval;
}

double api_bound_vanilla(double gamma, double beta, std::optional<std::size_t> memory, double alpha,
                         double rbar, double eps_eval) {
    if (!memory) return eval_improvement_term(gamma, eps_eval);
    const double bm = beta_power(beta, memory);
    const double bm1 = beta_power(beta, *memory - 1);
    const double q_norm = rbar + eps_eval;
    const double l1 = std::min(2.0, alpha * bm1 * q_norm);
    return l1 * gamma * bm * q_norm / (1.0 - gamma) + eval_improvement_term(gamma, eps_eval);
}

double api_bound_wc(double gamma, double beta, std::size_t memory, double qdiff_norm, double eps_eval) {
    if (qdiff_norm < 0.0) throw Error(ErrorKind::InvalidArgument, "qdiff_norm must be >= 0");
    const double bm = beta_power(beta, memory);
    return 2.0 * gamma * bm * qdiff_norm / ((1.0 - gamma) * (1.0 - bm)) +
           eval_improvement_term(gamma, eps_eval);
}

double api_bound_generic(double gamma, double eta, double policy_l1, double logits_delta,
                         double eps_eval) {
    return gamma * eta * policy_l1 * logits_delta / (1.0 - gamma) + eval_improvement_term(gamma, eps_eval);
}

XkRecurrence::XkRecurrence(const XkParams& params)
    : params_(params), constants_(wc_constants(params.gamma, params.beta, params.memory)) {
    const double g = params.gamma;
    drive_ = (1.0 + g * g) * params.eps_eval / (1.0 - g);
    x0_ = params.qstar_norm + params.q0_norm +
          (1.0 + g * g) * params.eps_eval / ((1.0 - g) * (1.0 - params.beta));
    const double before = params.qstar_norm / g;
    envelope_start_ = std::max(before, x0_);
    const double sum = constants_.d1 + constants_.d2;
    eps_floor_ = params.eps_eval == 0.0 ? 0.0
                 : constants_.converges
                     ? (1.0 + g * g) * params.eps_eval / ((1.0 - g) * (1.0 - sum))
                     : std::numeric_limits<double>::infinity();
    ring_.assign(params.memory + 1, before);
    ring_[0] = x0_;
}

double XkRecurrence::step() {
    const std::size_t n = ring_.size();
    const double current = ring_[k_ % n];
    // The slot about to be overwritten holds x_{k-M}.
    double& lagged = ring_[(k_ + 1) % n];
    const double next = constants_.d1 * current + constants_.d2 * lagged + drive_;
    lagged = next;
    ++k_;
    return next;
}

double XkRecurrence::x_prime(std::size_t k) const {
    const double floor = params_.eps_eval > 0.0 ? eps_floor_ : 0.0;
    return power(constants_.rate, static_cast<double>(k)) * envelope_start_ + floor;
}

double XkRecurrence::x_double_prime(std::size_t k) const {
    const double floor = params_.eps_eval > 0.0 ? eps_floor_ : 0.0;
    const double exponent = static_cast<double>(k) / static_cast<double>(params_.memory + 1);
    return power(constants_.d1 + constants_.d2, exponent) * envelope_start_ + floor;
}

SequenceSeries xk_sequence(const XkParams& params, std::size_t k_max) {
    if (k_max < 1) throw Error(ErrorKind::InvalidArgument, "k_max must be >= 1");
    XkRecurrence rec(params);
    SequenceSeries out;
    out.k_max = k_max;
    out.constants = rec.constants();
    out.eps_eval_floor = rec.eps_floor();
    out.x.reserve(k_max + 1);
    out.x.push_back(rec.x0());
    out.x_prime.push_back(rec.x_prime(0));
    out.x_double_prime.push_back(rec.x_double_prime(0));
    const double cap = kDivergenceCap * rec.x0();
    for (std::size_t k = 1; k <= k_max; ++k) {
        const double x = rec.step();
        out.x.push_back(x);
        out.x_prime.push_back(rec.x_prime(k));
        out.x_double_prime.push_back(rec.x_double_prime(k));
        if (!(x <= cap)) {
            out.diverged = true;
            break;
        }
    }
    return out;
}

}  // namespace pmdlab::theory
