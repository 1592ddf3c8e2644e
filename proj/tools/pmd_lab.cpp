#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pmdlab/error.hpp"
#include "pmdlab/harness.hpp"
#include "pmdlab/mdp.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolation = 1;
constexpr int kExitConfig = 2;
constexpr int kExitFailure = 3;

constexpr const char* kUsage =
    "usage: pmd-lab <subcommand> [--config FILE] [--key value ...]\n"
    "\n"
    "subcommands:\n"
    "  run            run the experiment(s) described by the config\n"
    "  bounds         theory constants and minimum memory (kind = bounds)\n"
    "  sequence       x_k envelope sequences (kind = sequence)\n"
    "  staq           sampled StaQ on a tabular MDP (kind = staq-sample)\n"
    "  validate-mdp   check an MDP JSON file: validate-mdp FILE\n"
    "  preset NAME    run a built-in preset; without NAME, list presets\n"
    "\n"
    "PMD_LAB_OUT overrides the output directory.\n"
    "exit codes: 0 ok, 1 bound violation in a preset, 2 config or input error,\n"
    "3 numerical failure (evaluation did not converge, non-finite logits)\n";

struct Cli {
    std::string subcommand;
    std::vector<std::string> positional;
    std::string config_path;
    pmdlab::ConfigOverrides overrides;
    bool print_only = false;
};

Cli parse_cli(int argc, char** argv) {
    Cli cli;
    if (argc < 2) throw pmdlab::Error(pmdlab::ErrorKind::MissingRequired, "missing subcommand");
    cli.subcommand = argv[1];
    for (int i = 2; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg.rfind("--", 0) != 0) {
            cli.positional.push_back(arg);
            continue;
        }
        std::string key = arg.substr(2);
        if (key == "print") {
            cli.print_only = true;
            continue;
        }
        std::string value;
        if (auto eq = key.find('='); eq != std::string::npos) {
            value = key.substr(eq + 1);
            key = key.substr(0, eq);
        } else {
            if (i + 1 >= argc) {
                throw pmdlab::Error(pmdlab::ErrorKind::MissingRequired, "flag --" + key + " needs a value");
            }
            value = argv[++i];
        }
        if (key == "config") {
            cli.config_path = value;
        } else {
            cli.overrides.emplace_back(key, value);
        }
    }
    return cli;
}

std::string read_file(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw pmdlab::Error(pmdlab::ErrorKind::IoError, "cannot open '" + path + "'");
    std::ostringstream buffer;
    buffer << file.rdbuf();
    return buffer.str();
}

pmdlab::ConfigOverrides with_env(const pmdlab::ConfigOverrides& overrides) {
    pmdlab::ConfigOverrides out;
    if (const char* dir = std::getenv("PMD_LAB_OUT"); dir && *dir) out.emplace_back("output", dir);
    out.insert(out.end(), overrides.begin(), overrides.end());
    return out;
}

void report(const pmdlab::RunRecord& record) {
    std::cout << record.config.name << " [" << pmdlab::to_string(record.config.kind) << "] "
              << (record.passed ? "ok" : "VIOLATION") << "\n";
    for (const auto& file : record.files) std::cout << "  wrote " << file << "\n";
}

int run_configs(const Cli& cli, const char* forced_kind) {
    const std::string text = cli.config_path.empty() ? std::string() : read_file(cli.config_path);
    pmdlab::ConfigOverrides overrides = with_env(cli.overrides);
    if (forced_kind) overrides.emplace_back("kind", forced_kind);
    std::vector<pmdlab::ExperimentConfig> configs;
    try {
        configs = pmdlab::parse_runs(text, overrides);
    } catch (const pmdlab::Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    for (auto& cfg : configs) {
        if (forced_kind && cfg.name == "run") cfg.name = forced_kind;
        report(pmdlab::run_experiment(cfg));
    }
    return kExitOk;
}

int validate_mdp(const Cli& cli) {
    std::string path;
    for (const auto& [key, value] : cli.overrides) {
        if (key == "mdp_file") path = value;
    }
    if (!cli.positional.empty()) path = cli.positional.front();
    if (path.empty()) {
        std::cerr << "config error: validate-mdp needs a file\n";
        return kExitConfig;
    }
    try {
        const pmdlab::TabularMdp mdp = pmdlab::load_mdp(path);
        pmdlab::validate(mdp);
        std::cout << "ok: |S| = " << mdp.n_states << ", |A| = " << mdp.n_actions << ", gamma = " << mdp.gamma
                  << ", reward_bound = " << mdp.reward_bound << "\n";
        return kExitOk;
    } catch (const pmdlab::Error& e) {
        std::cerr << "invalid MDP: " << e.what() << "\n";
        return kExitConfig;
    }
}

int preset(const Cli& cli) {
    if (cli.positional.empty()) {
        for (const auto& name : pmdlab::preset_names()) std::cout << name << "\n";
        return kExitOk;
    }
    const std::string& name = cli.positional.front();
    std::string text;
    try {
        text = pmdlab::preset_text(name);
    } catch (const pmdlab::Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    if (cli.print_only) {
        std::cout << text;
        return kExitOk;
    }
    std::vector<pmdlab::ExperimentConfig> configs;
    try {
        configs = pmdlab::parse_runs(text, with_env(cli.overrides));
    } catch (const pmdlab::Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    if (configs.size() == 1 && configs.front().name == "run") configs.front().name = name;
    bool passed = true;
    for (const auto& cfg : configs) {
        const auto record = pmdlab::run_experiment(cfg);
        report(record);
        passed = passed && record.passed;
    }
    return passed ? kExitOk : kExitViolation;
}

}  // namespace

int main(int argc, char** argv) {
    Cli cli;
    try {
        cli = parse_cli(argc, argv);
    } catch (const pmdlab::Error& e) {
        std::cerr << e.what() << "\n" << kUsage;
        return kExitConfig;
    }
    try {
        if (cli.subcommand == "-h" || cli.subcommand == "--help" || cli.subcommand == "help") {
            std::cout << kUsage;
            return kExitOk;
        }
        if (cli.subcommand == "run") return run_configs(cli, nullptr);
        if (cli.subcommand == "bounds") return run_configs(cli, "bounds");
        if (cli.subcommand == "sequence") return run_configs(cli, "sequence");
        if (cli.subcommand == "staq") return run_configs(cli, "staq-sample");
        if (cli.subcommand == "validate-mdp") return validate_mdp(cli);
        if (cli.subcommand == "preset") return preset(cli);
        std::cerr << "unknown subcommand '" << cli.subcommand << "'\n" << kUsage;
        return kExitConfig;
    } catch (const pmdlab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case pmdlab::ErrorKind::MaxIterExceeded:
            case pmdlab::ErrorKind::NonFiniteLogits: return kExitFailure;
            default: return kExitConfig;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}
