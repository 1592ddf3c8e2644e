#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pmdlab/mdp.hpp"
#include "pmdlab/pmd.hpp"
#include "pmdlab/soft_dp.hpp"
#include "pmdlab/staq.hpp"

namespace pmdlab {

enum class ExperimentKind {
    ExactEpmd,
    Vanilla,
    WeightCorrected,
    Bounds,
    Sequence,
    StaqSample,
    ImprovementAudit,
};

std::string_view to_string(ExperimentKind kind) noexcept;
std::optional<ExperimentKind> parse_experiment_kind(std::string_view text) noexcept;

enum class MdpSource { Random, Chain, Gridworld, File };

struct MdpSpec {
    MdpSource source = MdpSource::Random;
    std::size_t n_states = 10;
    std::size_t n_actions = 4;
    std::size_t branching = 3;
    double reward_bound = 1.0;
    double gamma = 0.9;
    double slip = 0.05;
    std::size_t width = 3;
    std::size_t height = 3;
    std::size_t goal_row = 2;
    std::size_t goal_col = 2;
    double step_reward = 0.0;
    double goal_reward = 1.0;
    std::string file;
    /// Seed of the random generator; falls back to the run seed.
    std::optional<std::uint64_t> seed;
};

TabularMdp build_mdp(const MdpSpec& spec, std::uint64_t run_seed);

struct ExperimentConfig {
    std::string name = "run";
    ExperimentKind kind = ExperimentKind::ExactEpmd;
    MdpSpec mdp;
    double tau = 0.1;
    /// Exactly one of eta / beta is set after parsing.
    std::optional<double> eta;
    std::optional<double> beta;
    std::optional<std::size_t> memory;
    std::size_t iters = 200;
    double tol = 1e-10;
    double eps_eval = 0.0;
    NoiseMode noise_mode = NoiseMode::Uniform;
    NoiseSeeding noise_seeding = NoiseSeeding::Fresh;
    double converge_tol = 1e-6;
    double perturbation_scale = 0.5;
    double qstar_norm = 1.0;
    double q0_norm = 1.0;
    std::size_t k_max = 1000;
    /// Every stride-th row is written for sequence runs; 0 picks one that keeps about 10^4 rows.
    std::size_t stride = 0;
    StaqConfig staq;
    /// Start state for staq runs; empty for uniform.
    std::optional<std::size_t> start_state;
    std::string output = "out";
    std::vector<std::uint64_t> seeds{0};

    double effective_eta() const;
    double effective_beta() const;
    /// PmdConfig for the pmd kinds; throws VariantMismatch otherwise.
    PmdConfig pmd_config() const;
};

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Line-oriented `key = value` document, `#` starts a comment. Overrides are
/// applied after the document. Throws UnknownKey, TypeError or MissingRequired.
ExperimentConfig parse_config(std::string_view text, const ConfigOverrides& overrides = {});

/// Keys understood by parse_config.
std::vector<std::string> config_keys();

/// Tabular output with a uniform schema. Integer columns are written without exponent.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<bool> integer_columns;
    std::vector<std::vector<double>> rows;

    std::size_t column(std::string_view name) const;
    bool has_nan() const;
};

/// Header first, `\n` line endings, 17-significant-digit scientific floats, nan as `nan`.
/// Throws IoError.
void emit_csv(const CsvTable& table, const std::string& path);
std::string to_csv(const CsvTable& table);
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(std::string_view text);

struct SeedRun {
    std::uint64_t seed = 0;
    CsvTable trace;
    std::map<std::string, double> metrics;
    bool passed = true;
    bool has_nan = false;
};

struct RunRecord {
    ExperimentConfig config;
    std::string config_echo;
    std::vector<SeedRun> runs;
    bool passed = true;
    std::vector<std::string> files;
    std::string summary_json;
};

/// Runs the configured experiment for every seed. When write_files is set
/// the per-seed CSVs, `<name>_agg.csv` and `<name>_summary.json` land in cfg.output.
RunRecord run_experiment(const ExperimentConfig& cfg, bool write_files = true);

std::string summary_json(const RunRecord& record);

/// Per-iteration mean and sample standard deviation across seeds.
CsvTable aggregate_runs(const std::vector<SeedRun>& runs);

/// Built-in preset names.
std::vector<std::string> preset_names();
/// Raw preset document. Throws UnknownKey.
std::string preset_text(std::string_view name);

/// Splits a document into runs: keys before the first `[section]` are shared
/// and each section adds its own keys. A document without sections is one run.
std::vector<ExperimentConfig> parse_runs(std::string_view text, const ConfigOverrides& overrides = {});

struct PresetResult {
    std::vector<RunRecord> records;
    bool passed = true;
};

PresetResult run_preset(std::string_view name, const ConfigOverrides& overrides = {},
                        bool write_files = true);

}  // namespace pmdlab
