#include "pmdlab/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "pmdlab/error.hpp"
#include "pmdlab/format.hpp"
#include "pmdlab/presets_data.hpp"
#include "pmdlab/theory.hpp"

namespace pmdlab {

std::string_view to_string(ExperimentKind kind) noexcept {
    switch (kind) {
        case ExperimentKind::ExactEpmd: return "exact-epmd";
        case ExperimentKind::Vanilla: return "vanilla";
        case ExperimentKind::WeightCorrected: return "weight-corrected";
        case ExperimentKind::Bounds: return "bounds";
        case ExperimentKind::Sequence: return "sequence";
        case ExperimentKind::StaqSample: return "staq-sample";
        case ExperimentKind::ImprovementAudit: return "improvement-audit";
    }
    return "unknown";
}

std::optional<ExperimentKind> parse_experiment_kind(std::string_view text) noexcept {
    for (auto kind : {ExperimentKind::ExactEpmd, ExperimentKind::Vanilla, ExperimentKind::WeightCorrected,
                      ExperimentKind::Bounds, ExperimentKind::Sequence, ExperimentKind::StaqSample,
                      ExperimentKind::ImprovementAudit}) {
        if (text == to_string(kind)) return kind;
    }
    return std::nullopt;
}

TabularMdp build_mdp(const MdpSpec& spec, std::uint64_t run_seed) {
    switch (spec.source) {
        case MdpSource::Random:
            return random_mdp(RngSeed{spec.seed.value_or(run_seed)}, spec.n_states, spec.n_actions,
                              spec.branching, spec.reward_bound, spec.gamma);
        case MdpSource::Chain: return chain_mdp(spec.n_states, spec.slip, spec.gamma);
        case MdpSource::Gridworld:
            return gridworld_mdp(spec.width, spec.height, GridCell{spec.goal_row, spec.goal_col},
                                 spec.step_reward, spec.goal_reward, spec.gamma);
        case MdpSource::File: {
            TabularMdp mdp = load_mdp(spec.file);
            validate(mdp);
            return mdp;
        }
    }
    throw Error(ErrorKind::InvalidArgument, "unknown MDP source");
}

double ExperimentConfig::effective_eta() const {
    if (eta) return *eta;
    if (beta) return *beta * tau / (1.0 - *beta);
    return 0.4;
}

double ExperimentConfig::effective_beta() const {
    if (beta) return *beta;
    const double e = effective_eta();
    return e / (e + tau);
}

PmdConfig ExperimentConfig::pmd_config() const {
    Variant variant = Variant::Exact;
    switch (kind) {
        case ExperimentKind::ExactEpmd:
        case ExperimentKind::ImprovementAudit: variant = Variant::Exact; break;
        case ExperimentKind::Vanilla: variant = Variant::Vanilla; break;
        case ExperimentKind::WeightCorrected: variant = Variant::WeightCorrected; break;
        default: throw Error(ErrorKind::VariantMismatch, "experiment kind has no PMD variant");
    }
    const std::optional<std::size_t> mem = variant == Variant::Exact ? std::nullopt : memory;
    if (beta) return PmdConfig::from_beta(tau, *beta, mem, variant);
    return PmdConfig(tau, effective_eta(), mem, variant);
}

// ---------------------------------------------------------------- parsing

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void type_error(const std::string& key, std::string_view value, std::string_view expected) {
    throw Error(ErrorKind::TypeError,
                "key '" + key + "' expects " + std::string(expected) + ", got '" + std::string(value) + "'");
}

double as_real(const std::string& key, std::string_view value) {
    auto parsed = parse_double(value);
    if (!parsed || std::isnan(*parsed)) type_error(key, value, "a real number");
    return *parsed;
}

std::uint64_t as_uint(const std::string& key, std::string_view value) {
    std::uint64_t out = 0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end || value.empty()) type_error(key, value, "a non-negative integer");
    return out;
}

std::size_t as_size(const std::string& key, std::string_view value) {
    return static_cast<std::size_t>(as_uint(key, value));
}

std::vector<std::uint64_t> as_seed_list(const std::string& key, std::string_view value) {
    std::vector<std::uint64_t> seeds;
    std::size_t pos = 0;
    while (pos <= value.size()) {
        auto comma = value.find(',', pos);
        if (comma == std::string_view::npos) comma = value.size();
        const auto item = trim(value.substr(pos, comma - pos));
        const auto colon = item.find(':');
        if (colon == std::string_view::npos) {
            seeds.push_back(as_uint(key, item));
        } else {
            const auto lo = as_uint(key, trim(item.substr(0, colon)));
            const auto hi = as_uint(key, trim(item.substr(colon + 1)));
            if (hi < lo) type_error(key, value, "an ascending range lo:hi");
            for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
        }
        pos = comma + 1;
    }
    if (seeds.empty()) type_error(key, value, "a seed list");
    return seeds;
}

template <class T>
T as_enum(const std::string& key, std::string_view value,
          std::initializer_list<std::pair<std::string_view, T>> choices) {
    std::string expected = "one of";
    for (const auto& [name, v] : choices) {
        if (value == name) return v;
        expected += " " + std::string(name);
    }
    type_error(key, value, expected);
}

std::string real_text(double v) { return format_double(v); }

struct KeyHandler {
    std::function<void(ExperimentConfig&, const std::string&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

struct ParseState {
    bool kind_set = false;
    std::optional<Variant> variant;
};

using HandlerTable = std::vector<std::pair<std::string, KeyHandler>>;

#define PMDLAB_REAL(KEY, FIELD)                                                                    \
    {KEY, {[](ExperimentConfig& c, const std::string& k, std::string_view v) { c.FIELD = as_real(k, v); }, \
           [](const ExperimentConfig& c) { return real_text(c.FIELD); }}}
#define PMDLAB_SIZE(KEY, FIELD)                                                                    \
    {KEY, {[](ExperimentConfig& c, const std::string& k, std::string_view v) { c.FIELD = as_size(k, v); }, \
           [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }}}

const HandlerTable& handlers() {
    static const HandlerTable table = {
        {"name", {[](ExperimentConfig& c, const std::string&, std::string_view v) { c.name = std::string(v); },
                  [](const ExperimentConfig& c) { return c.name; }}},
        {"kind", {[](ExperimentConfig& c, const std::string& k, std::string_view v) {
                      auto kind = parse_experiment_kind(v);
                      if (!kind) {
                          type_error(k, v, "one of exact-epmd vanilla weight-corrected bounds sequence "
                                           "staq-sample improvement-audit");
                      }
                      c.kind = *kind;
                  },
                  [](const ExperimentConfig& c) { return std::string(to_string(c.kind)); }}},
        {"variant", {[](ExperimentConfig&, const std::string& k, std::string_view v) {
                         if (!parse_variant(v)) type_error(k, v, "one of exact vanilla weight-corrected");
                     },
                     nullptr}},
        {"mdp", {[](ExperimentConfig& c, const std::string& k, std::string_view v) {
                     c.mdp.source = as_enum<MdpSource>(k, v, {{"random", MdpSource::Random},
                                                               {"chain", MdpSource::Chain},
                                                               {"gridworld", MdpSource::Gridworld},
                                                               {"file", MdpSource::File}});
                 },
                 [](const ExperimentConfig& c) -> std::string {
                     switch (c.mdp.source) {
                         case MdpSource::Random: return "random";
                         case MdpSource::Chain: return "chain";
                         case MdpSource::Gridworld: return "gridworld";
                         case MdpSource::File: return "file";
                     }
                     return "random";
                 }}},
        {"mdp_file", {[](ExperimentConfig& c, const std::string&, std::string_view v) {
                          c.mdp.file = std::string(v);
                          c.mdp.source = MdpSource::File;
                      },
                      [](const ExperimentConfig& c) { return c.mdp.file; }}},
        {"mdp_seed", {[](ExperimentConfig& c, const std::string& k, std::string_view v) { c.mdp.seed = as_uint(k, v); },
                      [](const ExperimentConfig& c) {
                          return c.mdp.seed ? std::to_string(*c.mdp.seed) : std::string("run");
                      }}},
        PMDLAB_SIZE("n_states", mdp.n_states),
        PMDLAB_SIZE("n_actions", mdp.n_actions),
        PMDLAB_SIZE("branching", mdp.branching),
        PMDLAB_REAL("reward_bound", mdp.reward_bound),
        PMDLAB_REAL("gamma", mdp.gamma),
        PMDLAB_REAL("slip", mdp.slip),
        PMDLAB_SIZE("width", mdp.width),
        PMDLAB_SIZE("height", mdp.height),
        PMDLAB_SIZE("goal_row", mdp.goal_row),
        PMDLAB_SIZE("goal_col", mdp.goal_col),
        PMDLAB_REAL("step_reward", mdp.step_reward),
        PMDLAB_REAL("goal_reward", mdp.goal_reward),
        PMDLAB_REAL("tau", tau),
        {"eta", {[](ExperimentConfig& c, const std::string& k, std::string_view v) { c.eta = as_real(k, v); },
                 [](const ExperimentConfig& c) { return real_text(c.effective_eta()); }}},
        {"beta", {[](ExperimentConfig& c, const std::string& k, std::string_view v) { c.beta = as_real(k, v); },
                  [](const ExperimentConfig& c) { return real_text(c.effective_beta()); }}},
        {"M", {[](ExperimentConfig& c, const std::string& k, std::string_view v) {
                   if (v == "inf" || v == "none") {
                       c.memory.reset();
                   } else {
                       c.memory = as_size(k, v);
                   }
               },
               [](const ExperimentConfig& c) {
                   return c.memory ? std::to_string(*c.memory) : std::string("inf");
               }}},
        PMDLAB_SIZE("iters", iters),
        PMDLAB_REAL("tol", tol),
        PMDLAB_REAL("eps_eval", eps_eval),
        {"noise_mode", {[](ExperimentConfig& c, const std::string& k, std::string_view v) {
                            c.noise_mode = as_enum<NoiseMode>(
                                k, v, {{"uniform", NoiseMode::Uniform}, {"signed-max", NoiseMode::SignedMax}});
                        },
                        [](const ExperimentConfig& c) {
                            return std::string(c.noise_mode == NoiseMode::Uniform ? "uniform" : "signed-max");
                        }}},
        {"noise_seeding", {[](ExperimentConfig& c, const std::string& k, std::string_view v) {
                               c.noise_seeding = as_enum<NoiseSeeding>(
                                   k, v, {{"fresh", NoiseSeeding::Fresh}, {"fixed", NoiseSeeding::Fixed}});
                           },
                           [](const ExperimentConfig& c) {
                               return std::string(c.noise_seeding == NoiseSeeding::Fresh ? "fresh" : "fixed");
                           }}},
        PMDLAB_REAL("converge_tol", converge_tol),
        PMDLAB_REAL("perturbation_scale", perturbation_scale),
        PMDLAB_REAL("qstar_norm", qstar_norm),
        PMDLAB_REAL("q0_norm", q0_norm),
        PMDLAB_SIZE("k_max", k_max),
        PMDLAB_SIZE("stride", stride),
        PMDLAB_SIZE("samples_per_iter", staq.samples_per_iter),
        PMDLAB_SIZE("buffer_capacity", staq.buffer_capacity),
        PMDLAB_SIZE("batch_size", staq.batch_size),
        PMDLAB_REAL("learning_rate", staq.learning_rate),
        PMDLAB_SIZE("gradient_steps", staq.gradient_steps),
        PMDLAB_SIZE("target_update_interval", staq.target_update_interval),
        {"aggregation", {[](ExperimentConfig& c, const std::string& k, std::string_view v) {
                             auto agg = parse_aggregation(v);
                             if (!agg) type_error(k, v, "one of min mean");
                             c.staq.aggregation = *agg;
                         },
                         [](const ExperimentConfig& c) { return std::string(to_string(c.staq.aggregation)); }}},
        PMDLAB_REAL("epsilon", staq.epsilon),
        {"behavior", {[](ExperimentConfig& c, const std::string& k, std::string_view v) {
                          c.staq.behavior = as_enum<BehaviorKind>(
                              k, v, {{"eps-softmax", BehaviorKind::EpsSoftmax}, {"sticky", BehaviorKind::Sticky}});
                      },
                      [](const ExperimentConfig& c) {
                          return std::string(c.staq.behavior == BehaviorKind::EpsSoftmax ? "eps-softmax" : "sticky");
                      }}},
        PMDLAB_REAL("sticky_lambda", staq.sticky_lambda),
        {"tau_schedule", {[](ExperimentConfig& c, const std::string& k, std::string_view v) {
                              c.staq.tau_schedule.kind = as_enum<TauSchedule::Kind>(
                                  k, v, {{"constant", TauSchedule::Kind::Constant},
                                         {"linear", TauSchedule::Kind::Linear}});
                          },
                          [](const ExperimentConfig& c) {
                              return std::string(c.staq.tau_schedule.kind == TauSchedule::Kind::Constant
                                                     ? "constant"
                                                     : "linear");
                          }}},
        PMDLAB_REAL("tau_from", staq.tau_schedule.from),
        PMDLAB_REAL("tau_to", staq.tau_schedule.to),
        PMDLAB_SIZE("tau_steps", staq.tau_schedule.steps),
        PMDLAB_SIZE("horizon", staq.horizon),
        {"start_state", {[](ExperimentConfig& c, const std::string& k, std::string_view v) {
                             if (v == "uniform") {
                                 c.start_state.reset();
                             } else {
                                 c.start_state = as_size(k, v);
                             }
                         },
                         [](const ExperimentConfig& c) {
                             return c.start_state ? std::to_string(*c.start_state) : std::string("uniform");
                         }}},
        {"output", {[](ExperimentConfig& c, const std::string&, std::string_view v) { c.output = std::string(v); },
                    [](const ExperimentConfig& c) { return c.output; }}},
        {"seeds", {[](ExperimentConfig& c, const std::string& k, std::string_view v) { c.seeds = as_seed_list(k, v); },
                   [](const ExperimentConfig& c) {
                       std::string out;
                       for (std::size_t i = 0; i < c.seeds.size(); ++i) {
                           if (i) out += ',';
                           out += std::to_string(c.seeds[i]);
                       }
                       return out;
                   }}},
    };
    return table;
}

#undef PMDLAB_REAL
#undef PMDLAB_SIZE

const KeyHandler* find_handler(std::string_view key) {
    for (const auto& [name, handler] : handlers()) {
        if (name == key) return &handler;
    }
    if (key == "memory") return find_handler("M");
    return nullptr;
}

using Assignments = std::vector<std::pair<std::string, std::string>>;

Assignments read_assignments(std::string_view text) {
    Assignments out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorKind::ParseError,
                        "line " + std::to_string(line_no) + ": expected 'key = value', got '" + std::string(line) + "'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": empty key");
        out.emplace_back(std::string(key), std::string(value));
    }
    return out;
}

ExperimentConfig build_config(const Assignments& assignments) {
    ExperimentConfig cfg;
    bool kind_set = false;
    std::optional<Variant> variant;
    for (const auto& [key, value] : assignments) {
        const KeyHandler* handler = find_handler(key);
        if (!handler) throw Error(ErrorKind::UnknownKey, "unknown key '" + key + "'");
        handler->set(cfg, key, value);
        if (key == "kind") kind_set = true;
        if (key == "variant") variant = parse_variant(value);
    }
    if (cfg.eta && cfg.beta) {
        throw Error(ErrorKind::InvalidArgument, "set either 'eta' or 'beta', not both");
    }
    if (variant) {
        const ExperimentKind derived = *variant == Variant::Exact       ? ExperimentKind::ExactEpmd
                                       : *variant == Variant::Vanilla ? ExperimentKind::Vanilla
                                                                      : ExperimentKind::WeightCorrected;
        if (!kind_set) {
            cfg.kind = derived;
        } else if (cfg.kind != derived && cfg.kind != ExperimentKind::ImprovementAudit) {
            throw Error(ErrorKind::VariantMismatch, "'variant' contradicts 'kind'");
        }
    } else if (!kind_set) {
        throw Error(ErrorKind::MissingRequired, "missing required key 'kind' (or 'variant')");
    }
    const bool needs_memory = cfg.kind == ExperimentKind::Vanilla ||
                              cfg.kind == ExperimentKind::WeightCorrected ||
                              cfg.kind == ExperimentKind::Sequence || cfg.kind == ExperimentKind::StaqSample;
    if (needs_memory && !cfg.memory) throw Error(ErrorKind::MissingRequired, "missing required key 'M'");
    if (cfg.mdp.source == MdpSource::File && cfg.mdp.file.empty()) {
        throw Error(ErrorKind::MissingRequired, "missing required key 'mdp_file'");
    }
    if (cfg.beta && !(*cfg.beta > 0.0 && *cfg.beta < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "beta must lie in (0, 1)");
    }
    if (cfg.kind == ExperimentKind::StaqSample) {
        cfg.staq.tau = cfg.tau;
        cfg.staq.eta = cfg.effective_eta();
        cfg.staq.memory = *cfg.memory;
    }
    return cfg;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const ConfigOverrides& overrides) {
    Assignments assignments = read_assignments(text);
    assignments.insert(assignments.end(), overrides.begin(), overrides.end());
    return build_config(assignments);
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [name, handler] : handlers()) keys.push_back(name);
    keys.emplace_back("memory");
    return keys;
}

namespace {

std::string echo_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [name, handler] : handlers()) {
        if (!handler.get) continue;
        out += name + " = " + handler.get(cfg) + "\n";
    }
    return out;
}

}  // namespace

std::vector<ExperimentConfig> parse_runs(std::string_view text, const ConfigOverrides& overrides) {
    std::string shared;
    std::vector<std::pair<std::string, std::string>> sections;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view raw = text.substr(pos, end - pos);
        pos = end + 1;
        std::string_view line = raw;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.size() >= 2 && line.front() == '[' && line.back() == ']') {
            sections.emplace_back(std::string(trim(line.substr(1, line.size() - 2))), std::string());
            continue;
        }
        std::string& target = sections.empty() ? shared : sections.back().second;
        target.append(raw);
        target.push_back('\n');
    }
    std::vector<ExperimentConfig> out;
    if (sections.empty()) {
        out.push_back(parse_config(shared, overrides));
        return out;
    }
    for (const auto& [name, body] : sections) {
        Assignments assignments = read_assignments(shared);
        assignments.emplace_back("name", name);
        Assignments own = read_assignments(body);
        assignments.insert(assignments.end(), own.begin(), own.end());
        assignments.insert(assignments.end(), overrides.begin(), overrides.end());
        out.push_back(build_config(assignments));
    }
    return out;
}

// ---------------------------------------------------------------- CSV

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return i;
    }
    throw Error(ErrorKind::UnknownKey, "no column '" + std::string(name) + "'");
}

bool CsvTable::has_nan() const {
    for (const auto& row : rows) {
        for (double v : row) {
            if (std::isnan(v)) return true;
        }
    }
    return false;
}

std::string to_csv(const CsvTable& table) {
    std::string out;
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
        if (i) out += ',';
        out += table.columns[i];
    }
    out += '\n';
    for (const auto& row : table.rows) {
        if (row.size() != table.columns.size()) {
            throw Error(ErrorKind::ShapeMismatch, "CSV row width differs from the header");
        }
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            const bool integer = i < table.integer_columns.size() && table.integer_columns[i];
            if (integer && std::isfinite(row[i]) && row[i] == std::trunc(row[i]) && std::abs(row[i]) < 0x1.0p53) {
                out += std::to_string(static_cast<long long>(row[i]));
            } else {
                out += format_double(row[i]);
            }
        }
        out += '\n';
    }
    return out;
}

void emit_csv(const CsvTable& table, const std::string& path) {
    const std::string text = to_csv(table);
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw Error(ErrorKind::IoError, "cannot open '" + path + "' for writing");
    file.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!file) throw Error(ErrorKind::IoError, "write to '" + path + "' failed");
}

CsvTable parse_csv(std::string_view text) {
    CsvTable table;
    bool header = true;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        std::vector<std::string_view> cells;
        std::size_t cpos = 0;
        while (true) {
            auto comma = line.find(',', cpos);
            if (comma == std::string_view::npos) {
                cells.push_back(line.substr(cpos));
                break;
            }
            cells.push_back(line.substr(cpos, comma - cpos));
            cpos = comma + 1;
        }
        if (header) {
            for (auto c : cells) table.columns.emplace_back(c);
            table.integer_columns.assign(table.columns.size(), false);
            header = false;
            continue;
        }
        if (cells.size() != table.columns.size()) {
            throw Error(ErrorKind::ParseError, "CSV row width differs from the header");
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (auto c : cells) {
            auto v = parse_double(c);
            if (!v) throw Error(ErrorKind::ParseError, "bad CSV number '" + std::string(c) + "'");
            row.push_back(*v);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw Error(ErrorKind::IoError, "cannot open '" + path + "'");
    std::ostringstream buffer;
    buffer << file.rdbuf();
    return parse_csv(buffer.str());
}

// ---------------------------------------------------------------- experiments

namespace {

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

double max_of(const CsvTable& table, std::string_view column) {
    const std::size_t c = table.column(column);
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& row : table.rows) {
        if (!std::isnan(row[c])) m = std::max(m, row[c]);
    }
    return m;
}

CsvTable trace_table(const IterationTrace& trace, double slack) {
    CsvTable t;
    t.columns = {"iter",          "q_gap_inf",         "thm_bound",       "gap_violation",
                 "improvement_gap", "improvement_bound", "improvement_violation",
                 "improvement_bound_generic", "generic_violation", "pinsker_lhs", "pinsker_rhs",
                 "pinsker_violation", "xi_delta_inf", "qdiff_inf", "eval_error_inf", "slack"};
    t.integer_columns.assign(t.columns.size(), false);
    t.integer_columns[0] = true;
    t.rows.reserve(trace.size());
    for (const auto& r : trace) {
        const double generic_violation = -r.improvement_gap - r.improvement_bound_generic;
        t.rows.push_back({static_cast<double>(r.iter), r.q_gap_inf, r.thm_bound, r.gap_violation(),
                          r.improvement_gap, r.improvement_bound, r.improvement_violation(),
                          r.improvement_bound_generic, generic_violation, r.pinsker_lhs, r.pinsker_rhs,
                          r.pinsker_violation(), r.xi_delta_inf, r.qdiff_inf, r.eval_error_inf, slack});
    }
    return t;
}

void finish_pmd_metrics(SeedRun& run, double slack) {
    const auto& rows = run.trace.rows;
    const double gap_v = max_of(run.trace, "gap_violation");
    const double imp_v = max_of(run.trace, "improvement_violation");
    const double gen_v = max_of(run.trace, "generic_violation");
    const double pin_v = max_of(run.trace, "pinsker_violation");
    run.metrics["max_gap_violation"] = gap_v;
    run.metrics["max_improvement_violation"] = imp_v;
    run.metrics["max_generic_violation"] = gen_v;
    run.metrics["max_pinsker_violation"] = pin_v;
    const double worst = std::max({gap_v, imp_v, gen_v, pin_v});
    run.metrics["max_violation"] = worst;
    run.metrics["slack"] = slack;
    if (!rows.empty()) run.metrics["final_gap"] = rows.back()[run.trace.column("q_gap_inf")];
    run.has_nan = run.trace.has_nan();
    run.passed = worst <= slack && !run.has_nan;
}

SeedRun run_pmd_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    const TabularMdp mdp = build_mdp(cfg.mdp, seed);
    const PmdConfig pmd = cfg.pmd_config();
    const OptimalSolution opt = solve_optimal(mdp, cfg.tau, {std::min(cfg.tol, 1e-12), 0});
    std::optional<NoiseSpec> noise;
    if (cfg.eps_eval > 0.0) noise = NoiseSpec{cfg.eps_eval, derive_seed(RngSeed{seed}, 1), cfg.noise_mode};
    const PolicyEvaluator evaluator({cfg.tol, 0}, noise, cfg.noise_seeding);
    const double slack = theory::slack(cfg.tol, mdp.gamma);

    SeedRun run;
    run.seed = seed;
    if (cfg.kind == ExperimentKind::ImprovementAudit) {
        IterationTrace trace = run_improvement_audit(mdp, pmd, evaluator, cfg.iters, cfg.perturbation_scale,
                                                     derive_seed(RngSeed{seed}, 2), opt.q);
        run.trace = trace_table(trace, slack);
    } else {
        PmdState state = run_pmd(mdp, pmd, evaluator, cfg.iters, opt.q);
        run.trace = trace_table(state.trace, slack);
        if (state.xk) {
            run.metrics["xk_converges"] = state.xk->constants().converges ? 1.0 : 0.0;
            run.metrics["xk_eps_floor"] = state.xk->eps_floor();
            run.metrics["d1"] = state.xk->constants().d1;
            run.metrics["d2"] = state.xk->constants().d2;
        }
    }
    finish_pmd_metrics(run, slack);
    const double rbar = q_upper_bound(mdp, cfg.tau);
    run.metrics["rbar"] = rbar;
    run.metrics["qstar_norm"] = sup_norm(opt.q);
    run.metrics["beta"] = pmd.beta();
    if (pmd.variant() == Variant::Vanilla) {
        run.metrics["residual_bound"] =
            theory::beta_power(pmd.beta(), pmd.memory()) *
                theory::vanilla_c1(mdp.gamma, pmd.beta(), pmd.memory(), rbar, cfg.eps_eval) +
            (1.0 + mdp.gamma * mdp.gamma) * cfg.eps_eval /
                ((1.0 - mdp.gamma) * (1.0 - mdp.gamma) * (1.0 - pmd.beta()));
    }
    const double final_gap = run.metrics.count("final_gap") ? run.metrics["final_gap"] : nan();
    run.metrics["converged"] = final_gap <= cfg.converge_tol ? 1.0 : 0.0;
    return run;
}

SeedRun run_bounds(const ExperimentConfig& cfg, std::uint64_t seed) {
    const double gamma = cfg.mdp.gamma;
    const double beta = cfg.effective_beta();
    const double rbar = (cfg.mdp.reward_bound +
                         gamma * cfg.tau * std::log(static_cast<double>(cfg.mdp.n_actions))) /
                        (1.0 - gamma);
    const std::size_t min_m = theory::min_memory(gamma, beta);
    const std::size_t hi = std::max(2 * min_m, cfg.memory.value_or(0));

    SeedRun run;
    run.seed = seed;
    run.trace.columns = {"M", "beta_M", "d1", "d2", "d1_plus_d2", "d3", "rate", "converges", "vanilla_residual"};
    run.trace.integer_columns = {true, false, false, false, false, false, false, true, false};
    for (std::size_t m = 1; m <= hi; ++m) {
        const auto wc = theory::wc_constants(gamma, beta, m);
        const double bm = theory::beta_power(beta, m);
        run.trace.rows.push_back({static_cast<double>(m), bm, wc.d1, wc.d2, wc.d1 + wc.d2, wc.d3, wc.rate,
                                  wc.converges ? 1.0 : 0.0,
                                  bm * theory::vanilla_c1(gamma, beta, m, rbar, cfg.eps_eval)});
    }
    run.metrics["min_M"] = static_cast<double>(min_m);
    run.metrics["threshold"] = theory::min_memory_threshold(gamma, beta);
    run.metrics["memory_ratio"] = theory::memory_ratio(gamma, beta);
    run.metrics["d"] = theory::exact_rate(gamma, beta);
    run.metrics["rbar"] = rbar;
    run.metrics["gamma"] = gamma;
    run.metrics["beta"] = beta;
    if (cfg.memory) {
        const auto wc = theory::wc_constants(gamma, beta, *cfg.memory);
        run.metrics["M"] = static_cast<double>(*cfg.memory);
        run.metrics["d1"] = wc.d1;
        run.metrics["d2"] = wc.d2;
        run.metrics["d3"] = wc.d3;
        run.metrics["rate"] = wc.rate;
        run.metrics["converges"] = wc.converges ? 1.0 : 0.0;
        run.metrics["c1_vanilla"] = theory::vanilla_c1(gamma, beta, *cfg.memory, rbar, cfg.eps_eval);
    }
    run.has_nan = run.trace.has_nan();
    run.passed = !run.has_nan;
    return run;
}

SeedRun run_sequence(const ExperimentConfig& cfg, std::uint64_t seed) {
    const theory::XkParams params{cfg.mdp.gamma, cfg.effective_beta(), *cfg.memory,
                                  cfg.qstar_norm, cfg.q0_norm, cfg.eps_eval};
    theory::XkRecurrence rec(params);
    const std::size_t stride = cfg.stride ? cfg.stride : std::max<std::size_t>(1, cfg.k_max / 10000);

    SeedRun run;
    run.seed = seed;
    run.trace.columns = {"k", "x_k", "x_prime_k", "x_double_prime_k", "x_over_x0"};
    run.trace.integer_columns = {true, false, false, false, false};
    const double x0 = rec.x0();
    double min_ratio = 1.0;
    double first_below = -1.0;
    double worst_excess = -std::numeric_limits<double>::infinity();
    bool diverged = false;
    for (std::size_t k = 0;; ++k) {
        const double x = rec.value();
        const double xp = rec.x_prime(k);
        worst_excess = std::max(worst_excess, (x - xp) / xp);
        min_ratio = std::min(min_ratio, x / x0);
        if (first_below < 0.0 && x < 1e-3 * x0) first_below = static_cast<double>(k);
        if (k % stride == 0 || k == cfg.k_max) {
            run.trace.rows.push_back({static_cast<double>(k), x, xp, rec.x_double_prime(k), x / x0});
        }
        if (k == cfg.k_max) break;
        if (x > theory::kDivergenceCap * x0) {
            diverged = true;
            if (k % stride != 0) run.trace.rows.push_back({static_cast<double>(k), x, xp, rec.x_double_prime(k), x / x0});
            break;
        }
        rec.step();
    }
    const auto& c = rec.constants();
    run.metrics["d1"] = c.d1;
    run.metrics["d2"] = c.d2;
    run.metrics["d1_plus_d2"] = c.d1 + c.d2;
    run.metrics["rate"] = c.rate;
    run.metrics["converges"] = c.converges ? 1.0 : 0.0;
    run.metrics["x0"] = x0;
    run.metrics["envelope_start"] = rec.envelope_start();
    run.metrics["min_x_over_x0"] = min_ratio;
    run.metrics["first_k_below_1e-3_x0"] = first_below;
    run.metrics["final_x"] = rec.value();
    run.metrics["steps"] = static_cast<double>(rec.k());
    run.metrics["eps_floor"] = rec.eps_floor();
    run.metrics["max_relative_excess_over_x_prime"] = worst_excess;
    run.metrics["diverged"] = diverged ? 1.0 : 0.0;
    run.has_nan = run.trace.has_nan();
    run.passed = !run.has_nan && (!c.converges || worst_excess <= 1e-9);
    return run;
}

SeedRun run_staq(const ExperimentConfig& cfg, std::uint64_t seed) {
    const TabularMdp mdp = build_mdp(cfg.mdp, seed);
    StaqConfig staq = cfg.staq;
    staq.seed = RngSeed{seed};
    if (cfg.start_state) {
        if (*cfg.start_state >= mdp.n_states) throw Error(ErrorKind::InvalidArgument, "start_state out of range");
        staq.start_dist.assign(mdp.n_states, 0.0);
        staq.start_dist[*cfg.start_state] = 1.0;
    }
    const StaqResult result = staq_run(mdp, staq, cfg.iters);
    const double optimal = optimal_greedy_return(mdp, staq.start_dist);

    SeedRun run;
    run.seed = seed;
    run.trace.columns = {"iter", "greedy_return", "behavior_return", "mean_loss", "buffer_len", "tau_current"};
    run.trace.integer_columns = {true, false, false, false, true, false};
    double running_max = -std::numeric_limits<double>::infinity();
    double max_drop = 0.0;
    for (const auto& s : result.stats) {
        run.trace.rows.push_back({static_cast<double>(s.iter), s.greedy_return, s.behavior_return, s.mean_loss,
                                  static_cast<double>(s.buffer_len), s.tau_current});
        if (running_max > 0.0) max_drop = std::max(max_drop, (running_max - s.greedy_return) / running_max);
        running_max = std::max(running_max, s.greedy_return);
    }
    const double final_return = result.stats.empty() ? nan() : result.stats.back().greedy_return;
    run.metrics["optimal_greedy_return"] = optimal;
    run.metrics["final_greedy_return"] = final_return;
    run.metrics["final_ratio"] = final_return / optimal;
    run.metrics["max_drop_fraction"] = max_drop;
    if (!result.stats.empty()) {
        const std::size_t tail_start = result.stats.size() - std::max<std::size_t>(1, result.stats.size() / 4);
        std::vector<double> tail;
        for (std::size_t i = tail_start; i < result.stats.size(); ++i) tail.push_back(result.stats[i].greedy_return);
        const double tail_max = *std::max_element(tail.begin(), tail.end());
        std::sort(tail.begin(), tail.end());
        const double median = tail.size() % 2 ? tail[tail.size() / 2]
                                              : 0.5 * (tail[tail.size() / 2 - 1] + tail[tail.size() / 2]);
        run.metrics["tail_median_over_tail_max"] = tail_max > 0.0 ? median / tail_max : nan();
    }
    run.has_nan = run.trace.has_nan();
    run.passed = !run.has_nan;
    return run;
}

std::string seed_csv_path(const ExperimentConfig& cfg, std::uint64_t seed) {
    return (std::filesystem::path(cfg.output) / (cfg.name + "_seed" + std::to_string(seed) + ".csv")).string();
}

}  // namespace

CsvTable aggregate_runs(const std::vector<SeedRun>& runs) {
    CsvTable out;
    if (runs.empty()) return out;
    const CsvTable& first = runs.front().trace;
    out.columns.push_back(first.columns.empty() ? "iter" : first.columns.front());
    out.integer_columns.push_back(true);
    for (std::size_t c = 1; c < first.columns.size(); ++c) {
        out.columns.push_back(first.columns[c] + "_mean");
        out.columns.push_back(first.columns[c] + "_std");
        out.integer_columns.push_back(false);
        out.integer_columns.push_back(false);
    }
    std::size_t n_rows = first.rows.size();
    for (const auto& r : runs) n_rows = std::min(n_rows, r.trace.rows.size());
    const double n = static_cast<double>(runs.size());
    for (std::size_t i = 0; i < n_rows; ++i) {
        std::vector<double> row{first.rows[i][0]};
        for (std::size_t c = 1; c < first.columns.size(); ++c) {
            double mean = 0.0;
            for (const auto& r : runs) mean += r.trace.rows[i][c];
            mean /= n;
            double var = 0.0;
            for (const auto& r : runs) var += (r.trace.rows[i][c] - mean) * (r.trace.rows[i][c] - mean);
            row.push_back(mean);
            row.push_back(runs.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0);
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

namespace {

nlohmann::json number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == std::trunc(v) && std::abs(v) < 0x1.0p53) return static_cast<std::int64_t>(v);
    return v;
}

}  // namespace

std::string summary_json(const RunRecord& record) {
    nlohmann::ordered_json j;
    j["name"] = record.config.name;
    j["kind"] = std::string(to_string(record.config.kind));
    j["passed"] = record.passed;
    j["config"] = record.config_echo;
    bool any_nan = false;
    nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
    for (const auto& run : record.runs) {
        nlohmann::ordered_json s;
        s["seed"] = run.seed;
        s["passed"] = run.passed;
        s["has_nan"] = run.has_nan;
        any_nan = any_nan || run.has_nan;
        nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
        for (const auto& [key, value] : run.metrics) metrics[key] = number(value);
        s["metrics"] = metrics;
        seeds.push_back(s);
    }
    j["has_nan"] = any_nan;
    if (record.runs.size() == 1) {
        for (const auto& [key, value] : record.runs.front().metrics) j[key] = number(value);
    }
    j["runs"] = seeds;
    j["files"] = record.files;
    return j.dump(2) + "\n";
}

RunRecord run_experiment(const ExperimentConfig& cfg, bool write_files) {
    RunRecord record;
    record.config = cfg;
    record.config_echo = echo_config(cfg);
    try {
        if (cfg.kind == ExperimentKind::Bounds) {
            record.runs.push_back(run_bounds(cfg, cfg.seeds.front()));
        } else {
            for (std::uint64_t seed : cfg.seeds) {
                switch (cfg.kind) {
                    case ExperimentKind::Sequence: record.runs.push_back(run_sequence(cfg, seed)); break;
                    case ExperimentKind::StaqSample: record.runs.push_back(run_staq(cfg, seed)); break;
                    default: record.runs.push_back(run_pmd_seed(cfg, seed)); break;
                }
                if (cfg.kind == ExperimentKind::Sequence) break;
            }
        }
    } catch (const Error& e) {
        throw Error(e.kind(), "run '" + cfg.name + "' (" + std::string(to_string(cfg.kind)) + "): " + e.what());
    }
    for (const auto& run : record.runs) record.passed = record.passed && run.passed;

    if (write_files) {
        std::error_code ec;
        std::filesystem::create_directories(cfg.output, ec);
        if (ec) throw Error(ErrorKind::IoError, "cannot create output directory '" + cfg.output + "'");
        for (const auto& run : record.runs) {
            const std::string path = seed_csv_path(cfg, run.seed);
            emit_csv(run.trace, path);
            record.files.push_back(path);
        }
        const std::string agg = (std::filesystem::path(cfg.output) / (cfg.name + "_agg.csv")).string();
        emit_csv(aggregate_runs(record.runs), agg);
        record.files.push_back(agg);
        const std::string summary_path =
            (std::filesystem::path(cfg.output) / (cfg.name + "_summary.json")).string();
        record.files.push_back(summary_path);
        record.summary_json = summary_json(record);
        std::ofstream file(summary_path, std::ios::binary | std::ios::trunc);
        if (!file) throw Error(ErrorKind::IoError, "cannot open '" + summary_path + "' for writing");
        file << record.summary_json;
    } else {
        record.summary_json = summary_json(record);
    }
    return record;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const auto& p : detail::kPresets) names.emplace_back(p.name);
    return names;
}

std::string preset_text(std::string_view name) {
    for (const auto& p : detail::kPresets) {
        if (p.name == name) return std::string(p.text);
    }
    throw Error(ErrorKind::UnknownKey, "unknown preset '" + std::string(name) + "'");
}

PresetResult run_preset(std::string_view name, const ConfigOverrides& overrides, bool write_files) {
    PresetResult result;
    std::vector<ExperimentConfig> configs = parse_runs(preset_text(name), overrides);
    if (configs.size() == 1 && configs.front().name == "run") configs.front().name = std::string(name);
    for (const auto& cfg : configs) {
        result.records.push_back(run_experiment(cfg, write_files));
        result.passed = result.passed && result.records.back().passed;
    }
    return result;
}

}  // namespace pmdlab
