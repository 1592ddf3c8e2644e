#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <pmdlab/error.hpp>
#include <pmdlab/harness.hpp>
#include <pmdlab/mdp.hpp>
#include <pmdlab/pmd.hpp>
#include <pmdlab/soft_dp.hpp>
#include <pmdlab/staq.hpp>
#include <pmdlab/theory.hpp>

#include <cstring>

namespace py = pybind11;
using namespace pmdlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <class Tag>
Array to_array(const StateActionTable<Tag>& t) {
    Array out({t.n_states(), t.n_actions()});
    std::memcpy(out.mutable_data(), t.values().data(), t.values().size() * sizeof(double));
    return out;
}

template <class Table>
Table from_array(const Array& a) {
    if (a.ndim() != 2) throw Error(ErrorKind::ShapeMismatch, "expected a 2-d array");
    const auto n_s = static_cast<std::size_t>(a.shape(0));
    const auto n_a = static_cast<std::size_t>(a.shape(1));
    return Table(n_s, n_a, std::vector<double>(a.data(), a.data() + n_s * n_a));
}

Array vector_array(const std::vector<double>& v) {
    Array out(static_cast<py::ssize_t>(v.size()));
    std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(double));
    return out;
}

PmdConfig make_config(const std::string& variant, double tau, std::optional<double> eta,
                      std::optional<double> beta, std::optional<std::size_t> memory) {
    const auto v = parse_variant(variant);
    if (!v) throw Error(ErrorKind::InvalidArgument, "unknown variant '" + variant + "'");
    if (eta && beta) throw Error(ErrorKind::InvalidArgument, "give eta or beta, not both");
    if (beta) return PmdConfig::from_beta(tau, *beta, memory, *v);
    return PmdConfig(tau, eta.value_or(0.4), memory, *v);
}

py::dict trace_dict(const IterationTrace& trace) {
    const std::size_t n = trace.size();
    auto column = [&](auto getter) {
        Array a(static_cast<py::ssize_t>(n));
        double* p = a.mutable_data();
        for (std::size_t i = 0; i < n; ++i) p[i] = getter(trace[i]);
        return a;
    };
    py::dict d;
    d["iter"] = column([](const IterationRecord& r) { return double(r.iter); });
    d["q_gap_inf"] = column([](const IterationRecord& r) { return r.q_gap_inf; });
    d["thm_bound"] = column([](const IterationRecord& r) { return r.thm_bound; });
    d["improvement_gap"] = column([](const IterationRecord& r) { return r.improvement_gap; });
    d["improvement_bound"] = column([](const IterationRecord& r) { return r.improvement_bound; });
    d["improvement_bound_generic"] = column([](const IterationRecord& r) { return r.improvement_bound_generic; });
    d["pinsker_lhs"] = column([](const IterationRecord& r) { return r.pinsker_lhs; });
    d["pinsker_rhs"] = column([](const IterationRecord& r) { return r.pinsker_rhs; });
    d["xi_delta_inf"] = column([](const IterationRecord& r) { return r.xi_delta_inf; });
    d["qdiff_inf"] = column([](const IterationRecord& r) { return r.qdiff_inf; });
    d["eval_error_inf"] = column([](const IterationRecord& r) { return r.eval_error_inf; });
    return d;
}

py::dict wc_dict(const theory::WcConstants& c) {
    py::dict d;
    d["memory"] = c.memory;
    d["c1"] = c.c1;
    d["c2"] = c.c2;
    d["d1"] = c.d1;
    d["d2"] = c.d2;
    d["d3"] = c.d3;
    d["rate"] = c.rate;
    d["converges"] = c.converges;
    return d;
}

}  // namespace

PYBIND11_MODULE(_pmdlab, m) {
    m.doc() = "Tabular policy mirror descent with finite memory";

    py::register_exception<Error>(m, "PmdlabError", PyExc_ValueError);

    py::class_<TabularMdp>(m, "Mdp")
        .def_readonly("n_states", &TabularMdp::n_states)
        .def_readonly("n_actions", &TabularMdp::n_actions)
        .def_readonly("gamma", &TabularMdp::gamma)
        .def_readonly("reward_bound", &TabularMdp::reward_bound)
        .def_property_readonly("rewards",
                               [](const TabularMdp& mdp) {
                                   return to_array(QTable(mdp.n_states, mdp.n_actions, mdp.rewards));
                               })
        .def_property_readonly("transitions",
                               [](const TabularMdp& mdp) {
                                   Array out({mdp.n_states, mdp.n_actions, mdp.n_states});
                                   std::memcpy(out.mutable_data(), mdp.transitions.data(),
                                               mdp.transitions.size() * sizeof(double));
                                   return out;
                               })
        .def("to_json", [](const TabularMdp& mdp) { return to_json(mdp); })
        .def_static("from_json", [](const std::string& text) {
            TabularMdp mdp = mdp_from_json(text);
            validate(mdp);
            return mdp;
        })
        .def("__eq__", [](const TabularMdp& a, const TabularMdp& b) { return a == b; });

    m.def("random_mdp",
          [](std::uint64_t seed, std::size_t n_states, std::size_t n_actions, std::size_t branching,
             double reward_bound, double gamma) {
              return random_mdp(RngSeed{seed}, n_states, n_actions, branching, reward_bound, gamma);
          },
          py::arg("seed"), py::arg("n_states"), py::arg("n_actions"), py::arg("branching"),
          py::arg("reward_bound") = 1.0, py::arg("gamma") = 0.9);
    m.def("chain_mdp", &chain_mdp, py::arg("n"), py::arg("slip"), py::arg("gamma"));
    m.def("gridworld_mdp",
          [](std::size_t width, std::size_t height, std::size_t goal_row, std::size_t goal_col, double step,
             double goal, double gamma) {
              return gridworld_mdp(width, height, GridCell{goal_row, goal_col}, step, goal, gamma);
          },
          py::arg("width"), py::arg("height"), py::arg("goal_row"), py::arg("goal_col"),
          py::arg("step_reward") = 0.0, py::arg("goal_reward") = 1.0, py::arg("gamma") = 0.9);

    m.def("evaluate_policy",
          [](const TabularMdp& mdp, double tau, const Array& policy, double tol) {
              return to_array(evaluate_policy_exact(mdp, tau, from_array<PolicyTable>(policy), {tol, 0}));
          },
          py::arg("mdp"), py::arg("tau"), py::arg("policy"), py::arg("tol") = 1e-10);
    m.def("solve_optimal",
          [](const TabularMdp& mdp, double tau, double tol) {
              const auto sol = solve_optimal(mdp, tau, {tol, 0});
              return py::make_tuple(to_array(sol.q), to_array(sol.policy));
          },
          py::arg("mdp"), py::arg("tau"), py::arg("tol") = 1e-10);
    m.def("softmax_policy", [](const Array& logits) { return to_array(softmax_policy(from_array<Logits>(logits))); });
    m.def("closed_form_update",
          [](const std::vector<double>& q, const std::vector<double>& prev, double tau, double eta) {
              return vector_array(closed_form_update(q, prev, tau, eta));
          },
          py::arg("q"), py::arg("prev"), py::arg("tau"), py::arg("eta"));

    m.def("run_pmd",
          [](const TabularMdp& mdp, const std::string& variant, std::size_t iters, double tau,
             std::optional<double> eta, std::optional<double> beta, std::optional<std::size_t> memory,
             double tol, double eps_eval, std::uint64_t noise_seed, bool signed_max) {
              const PmdConfig cfg = make_config(variant, tau, eta, beta, memory);
              std::optional<NoiseSpec> noise;
              if (eps_eval > 0.0) {
                  noise = NoiseSpec{eps_eval, RngSeed{noise_seed},
                                    signed_max ? NoiseMode::SignedMax : NoiseMode::Uniform};
              }
              const PolicyEvaluator evaluator({tol, 0}, noise);
              const auto qstar = solve_optimal(mdp, tau, {tol, 0}).q;
              const auto state = run_pmd(mdp, cfg, evaluator, iters, qstar);
              py::dict out = trace_dict(state.trace);
              out["logits"] = to_array(state.logits);
              out["policy"] = to_array(state.policy);
              out["alpha"] = cfg.alpha();
              out["beta"] = cfg.beta();
              return out;
          },
          py::arg("mdp"), py::arg("variant"), py::arg("iters"), py::arg("tau") = 0.1, py::arg("eta") = py::none(),
          py::arg("beta") = py::none(), py::arg("memory") = py::none(), py::arg("tol") = 1e-10,
          py::arg("eps_eval") = 0.0, py::arg("noise_seed") = 0, py::arg("signed_max") = false);

    m.def("min_memory", &theory::min_memory, py::arg("gamma"), py::arg("beta"));
    m.def("min_memory_threshold", &theory::min_memory_threshold, py::arg("gamma"), py::arg("beta"));
    m.def("exact_rate", &theory::exact_rate, py::arg("gamma"), py::arg("beta"));
    m.def("wc_constants",
          [](double gamma, double beta, std::size_t memory) { return wc_dict(theory::wc_constants(gamma, beta, memory)); },
          py::arg("gamma"), py::arg("beta"), py::arg("memory"));
    m.def("exact_epmd_bound", &theory::exact_epmd_bound, py::arg("k"), py::arg("gamma"), py::arg("beta"),
          py::arg("qstar_norm"), py::arg("q0_gap_norm"));
    m.def("vanilla_bound", &theory::vanilla_bound, py::arg("k"), py::arg("gamma"), py::arg("beta"),
          py::arg("memory"), py::arg("rbar"), py::arg("qstar_norm"), py::arg("eps_eval") = 0.0);
    m.def("vanilla_c1", &theory::vanilla_c1, py::arg("gamma"), py::arg("beta"), py::arg("memory"),
          py::arg("rbar"), py::arg("eps_eval") = 0.0);
    m.def("api_bound_vanilla", &theory::api_bound_vanilla, py::arg("gamma"), py::arg("beta"), py::arg("memory"),
          py::arg("alpha"), py::arg("rbar"), py::arg("eps_eval") = 0.0);
    m.def("api_bound_wc", &theory::api_bound_wc, py::arg("gamma"), py::arg("beta"), py::arg("memory"),
          py::arg("qdiff_norm"), py::arg("eps_eval") = 0.0);
    m.def("xk_sequence",
          [](double gamma, double beta, std::size_t memory, double qstar_norm, double q0_norm, double eps_eval,
             std::size_t k_max) {
              const auto s = theory::xk_sequence({gamma, beta, memory, qstar_norm, q0_norm, eps_eval}, k_max);
              py::dict d;
              d["x"] = vector_array(s.x);
              d["x_prime"] = vector_array(s.x_prime);
              d["x_double_prime"] = vector_array(s.x_double_prime);
              d["eps_eval_floor"] = s.eps_eval_floor;
              d["diverged"] = s.diverged;
              d["constants"] = wc_dict(s.constants);
              return d;
          },
          py::arg("gamma"), py::arg("beta"), py::arg("memory"), py::arg("qstar_norm") = 1.0,
          py::arg("q0_norm") = 1.0, py::arg("eps_eval") = 0.0, py::arg("k_max") = 1000);

    m.def("staq_run",
          [](const TabularMdp& mdp, std::size_t iters, std::uint64_t seed, const py::dict& options) {
              StaqConfig cfg;
              cfg.seed = RngSeed{seed};
              for (auto [key, value] : options) {
                  const auto k = key.cast<std::string>();
                  if (k == "tau") cfg.tau = value.cast<double>();
                  else if (k == "eta") cfg.eta = value.cast<double>();
                  else if (k == "memory") cfg.memory = value.cast<std::size_t>();
                  else if (k == "samples_per_iter") cfg.samples_per_iter = value.cast<std::size_t>();
                  else if (k == "buffer_capacity") cfg.buffer_capacity = value.cast<std::size_t>();
                  else if (k == "batch_size") cfg.batch_size = value.cast<std::size_t>();
                  else if (k == "learning_rate") cfg.learning_rate = value.cast<double>();
                  else if (k == "gradient_steps") cfg.gradient_steps = value.cast<std::size_t>();
                  else if (k == "target_update_interval") cfg.target_update_interval = value.cast<std::size_t>();
                  else if (k == "epsilon") cfg.epsilon = value.cast<double>();
                  else if (k == "horizon") cfg.horizon = value.cast<std::size_t>();
                  else if (k == "start_dist") cfg.start_dist = value.cast<std::vector<double>>();
                  else if (k == "aggregation") {
                      const auto a = parse_aggregation(value.cast<std::string>());
                      if (!a) throw Error(ErrorKind::TypeError, "aggregation must be min or mean");
                      cfg.aggregation = *a;
                  } else if (k == "sticky_lambda") {
                      cfg.behavior = BehaviorKind::Sticky;
                      cfg.sticky_lambda = value.cast<double>();
                  } else {
                      throw Error(ErrorKind::UnknownKey, "unknown StaQ option '" + k + "'");
                  }
              }
              const auto res = staq_run(mdp, cfg, iters);
              std::vector<double> greedy, behavior, loss;
              for (const auto& s : res.stats) {
                  greedy.push_back(s.greedy_return);
                  behavior.push_back(s.behavior_return);
                  loss.push_back(s.mean_loss);
              }
              py::dict d;
              d["greedy_return"] = vector_array(greedy);
              d["behavior_return"] = vector_array(behavior);
              d["mean_loss"] = vector_array(loss);
              d["logits"] = to_array(res.logits);
              d["optimal_greedy_return"] = optimal_greedy_return(mdp, cfg.start_dist);
              return d;
          },
          py::arg("mdp"), py::arg("iters"), py::arg("seed") = 0, py::arg("options") = py::dict());

    m.def("run_config",
          [](const std::string& text, const std::vector<std::pair<std::string, std::string>>& overrides,
             bool write_files) {
              std::vector<std::string> out;
              for (const auto& cfg : parse_runs(text, overrides)) out.push_back(run_experiment(cfg, write_files).summary_json);
              return out;
          },
          py::arg("text"), py::arg("overrides") = std::vector<std::pair<std::string, std::string>>{},
          py::arg("write_files") = false);
    m.def("preset_names", &preset_names);
    m.def("preset_text", [](const std::string& name) { return preset_text(name); });
}
