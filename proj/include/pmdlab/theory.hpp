#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace pmdlab::theory {

/// beta^M evaluated as exp(M log beta); 0 for unbounded memory.
double beta_power(double beta, std::optional<std::size_t> memory);

/// d = beta + gamma (1 - beta), the exact EPMD contraction rate.
double exact_rate(double gamma, double beta);

/// Tolerance slack for evaluated (not exact) Q-tables: 4 tol / (1 - gamma).
double slack(double tol, double gamma);

/// gamma d^{k-1} (||Q* - Q_0|| + 2 beta ||Q*||), valid for k >= 1.
double exact_epmd_bound(int k, double gamma, double beta, double qstar_norm, double q0_gap_norm);

/// C1 of the vanilla finite-memory bound. With eps_eval > 0 the
/// gamma eps / ((1 - gamma)(1 - beta)) addend is included.
double vanilla_c1(double gamma, double beta, std::optional<std::size_t> memory, double rbar,
                  double eps_eval = 0.0);

/// gamma d^k ||Q*|| + beta^M C1 + (1 + gamma^2) eps / ((1 - gamma)^2 (1 - beta)).
double vanilla_bound(int k, double gamma, double beta, std::optional<std::size_t> memory,
                     double rbar, double qstar_norm, double eps_eval = 0.0);

/// (1 - gamma)^2 (1 - beta) / (gamma^2 (3 + beta) + 1 - beta); d1 + d2 < 1 iff beta^M is below it.
double memory_ratio(double gamma, double beta);

/// log(memory_ratio) / log(beta); the weight-corrected scheme converges for M above it.
double min_memory_threshold(double gamma, double beta);

/// Smallest integer strictly greater than min_memory_threshold.
std::size_t min_memory(double gamma, double beta);

struct WcConstants {
    std::size_t memory = 0;
    double c1 = 0.0;
    double c2 = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
    /// d1 + d2 / d3
    double rate = 0.0;
    /// d1 + d2 < 1, decided through beta^M < memory_ratio to avoid cancellation.
    bool converges = false;
};

WcConstants wc_constants(double gamma, double beta, std::size_t memory);

struct TheoryConstants {
    double gamma = 0.0;
    double beta = 0.0;
    double rbar = 0.0;
    double d = 0.0;
    double c1_vanilla = 0.0;
    WcConstants wc;
    double threshold = 0.0;
    std::size_t min_memory = 0;
};

TheoryConstants theory_constants(double gamma, double beta, std::size_t memory, double rbar,
                                 double eps_eval = 0.0);

/// Per-step evaluation-error term (1 + gamma) eps / (1 - gamma) of the improvement bounds.
double eval_improvement_term(double gamma, double eps_eval);

/// Magnitude of the vanilla improvement lower bound:
/// min{2, alpha beta^{M-1} (R + eps)} gamma beta^M (R + eps) / (1 - gamma) + eval term.
double api_bound_vanilla(double gamma, double beta, std::optional<std::size_t> memory, double alpha,
                         double rbar, double eps_eval = 0.0);

/// 2 gamma beta^M ||Q_k - Q_{k-M}|| / ((1 - gamma)(1 - beta^M)) + eval term.
double api_bound_wc(double gamma, double beta, std::size_t memory, double qdiff_norm,
                    double eps_eval = 0.0);

/// Generic improvement bound for an arbitrary reference policy:
/// gamma eta max_s ||pi - pi~||_1 ||xi - xi~||_inf / (1 - gamma) + eval term.
double api_bound_generic(double gamma, double eta, double policy_l1, double logits_delta,
                         double eps_eval = 0.0);

struct XkParams {
    double gamma = 0.99;
    double beta = 0.95;
    std::size_t memory = 1;
    double qstar_norm = 1.0;
    double q0_norm = 1.0;
    double eps_eval = 0.0;
};

/// Streaming form of x_{k+1} = d1 x_k + d2 x_{k-M} + (1 + gamma^2) eps / (1 - gamma),
/// with x_k = ||Q*|| / gamma for k < 0. Keeps only the last M + 1 values.
class XkRecurrence {
public:
    explicit XkRecurrence(const XkParams& params);

    std::size_t k() const noexcept { return k_; }
    double value() const noexcept { return ring_[k_ % ring_.size()]; }
    double x0() const noexcept { return x0_; }
    /// max{||Q*|| / gamma, x_0}, the start value of the envelope sequences.
    double envelope_start() const noexcept { return envelope_start_; }
    const WcConstants& constants() const noexcept { return constants_; }

    /// Advances to k + 1 and returns x_{k+1}.
    double step();

    /// (d1 + d2/d3)^k max{x_{-1}, x_0}, plus the eps floor when eps > 0.
    double x_prime(std::size_t k) const;
    /// (d1 + d2)^{k / (M + 1)} max{x_{-1}, x_0}, plus the eps floor when eps > 0.
    double x_double_prime(std::size_t k) const;
    /// (1 + gamma^2) eps / ((1 - gamma)(1 - d1 - d2)); +inf when d1 + d2 >= 1.
    double eps_floor() const noexcept { return eps_floor_; }

private:
    XkParams params_;
    WcConstants constants_;
    double drive_ = 0.0;
    double x0_ = 0.0;
    double envelope_start_ = 0.0;
    double eps_floor_ = 0.0;
    std::size_t k_ = 0;
    std::vector<double> ring_;
};

struct SequenceSeries {
    std::size_t k_max = 0;
    std::vector<double> x;
    std::vector<double> x_prime;
    std::vector<double> x_double_prime;
    double eps_eval_floor = 0.0;
    WcConstants constants;
    /// Set when x_k exceeded kDivergenceCap * x_0; the series stops there.
    bool diverged = false;
};

inline constexpr double kDivergenceCap = 1e12;

SequenceSeries xk_sequence(const XkParams& params, std::size_t k_max);

}  // namespace pmdlab::theory
