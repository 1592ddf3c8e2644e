#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pmdlab/error.hpp"

namespace pmdlab {

/// Dense row-major |S| x |A| array. The tag keeps Q-values, logits and
/// action probabilities from being mixed up silently; conversions between
/// tags are explicit.
template <class Tag>
class StateActionTable {
public:
    StateActionTable() = default;

    StateActionTable(std::size_t n_states, std::size_t n_actions, double fill = 0.0)
        : n_states_(n_states), n_actions_(n_actions), values_(n_states * n_actions, fill) {}

    StateActionTable(std::size_t n_states, std::size_t n_actions, std::vector<double> values)
        : n_states_(n_states), n_actions_(n_actions), values_(std::move(values)) {
        if (values_.size() != n_states_ * n_actions_) {
            throw Error(ErrorKind::ShapeMismatch, "table data does not match |S| x |A|");
        }
    }

    template <class OtherTag>
    explicit StateActionTable(const StateActionTable<OtherTag>& other)
        : n_states_(other.n_states()), n_actions_(other.n_actions()),
          values_(other.values().begin(), other.values().end()) {}

    std::size_t n_states() const noexcept { return n_states_; }
    std::size_t n_actions() const noexcept { return n_actions_; }

    double& operator()(std::size_t s, std::size_t a) { return values_[s * n_actions_ + a]; }
    double operator()(std::size_t s, std::size_t a) const { return values_[s * n_actions_ + a]; }

    std::span<double> row(std::size_t s) { return {values_.data() + s * n_actions_, n_actions_}; }
    std::span<const double> row(std::size_t s) const {
        return {values_.data() + s * n_actions_, n_actions_};
    }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    template <class OtherTag>
    bool same_shape(const StateActionTable<OtherTag>& other) const noexcept {
        return n_states_ == other.n_states() && n_actions_ == other.n_actions();
    }

    StateActionTable& operator+=(const StateActionTable& rhs) {
        require_same_shape(rhs);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += rhs.values_[i];
        return *this;
    }

    StateActionTable& operator-=(const StateActionTable& rhs) {
        require_same_shape(rhs);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= rhs.values_[i];
        return *this;
    }

    StateActionTable& operator*=(double c) {
        for (double& v : values_) v *= c;
        return *this;
    }

    /// this += c * rhs
    StateActionTable& add_scaled(const StateActionTable& rhs, double c) {
        require_same_shape(rhs);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += c * rhs.values_[i];
        return *this;
    }

    friend StateActionTable operator+(StateActionTable lhs, const StateActionTable& rhs) {
        return lhs += rhs;
    }
    friend StateActionTable operator-(StateActionTable lhs, const StateActionTable& rhs) {
        return lhs -= rhs;
    }
    friend StateActionTable operator*(double c, StateActionTable rhs) { return rhs *= c; }

    friend bool operator==(const StateActionTable&, const StateActionTable&) = default;

private:
    void require_same_shape(const StateActionTable& rhs) const {
        if (!same_shape(rhs)) throw Error(ErrorKind::ShapeMismatch, "tables differ in shape");
    }

    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    std::vector<double> values_;
};

using QTable = StateActionTable<struct QValueTag>;
using Logits = StateActionTable<struct LogitsTag>;
using PolicyTable = StateActionTable<struct PolicyTag>;
using VTable = std::vector<double>;

template <class Tag>
double sup_norm(const StateActionTable<Tag>& t) {
    double m = 0.0;
    for (double v : t.values()) m = std::max(m, std::abs(v));
    return m;
}

template <class Tag>
double sup_distance(const StateActionTable<Tag>& a, const StateActionTable<Tag>& b) {
    if (!a.same_shape(b)) throw Error(ErrorKind::ShapeMismatch, "tables differ in shape");
    double m = 0.0;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
    return m;
}

/// min over entries of (a - b); the policy-improvement gap when a = Q_{k+1}, b = Q_k.
template <class Tag>
double min_difference(const StateActionTable<Tag>& a, const StateActionTable<Tag>& b) {
    if (!a.same_shape(b)) throw Error(ErrorKind::ShapeMismatch, "tables differ in shape");
    auto av = a.values();
    auto bv = b.values();
    double m = av.empty() ? 0.0 : av[0] - bv[0];
    for (std::size_t i = 1; i < av.size(); ++i) m = std::min(m, av[i] - bv[i]);
    return m;
}

/// Largest per-state L1 distance between two policies.
double max_l1_distance(const PolicyTable& p, const PolicyTable& q);

/// Argmax per state; ties go to the lowest action index.
std::vector<int> greedy_actions(const QTable& q);

/// Deterministic policy putting all mass on the given actions.
PolicyTable deterministic_policy(std::size_t n_actions, const std::vector<int>& actions);

PolicyTable uniform_policy(std::size_t n_states, std::size_t n_actions);

}  // namespace pmdlab
