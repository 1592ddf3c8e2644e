#include <doctest.h>

#include <pmdlab/error.hpp>
#include <pmdlab/harness.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "../support.hpp"

using namespace pmdlab;

namespace {

ErrorKind parse_error(std::string_view text, const ConfigOverrides& ov = {}) {
    try {
        parse_config(text, ov);
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("config accepted: " << text);
    return ErrorKind::InvalidArgument;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("parse variant and memory") {
    const auto c = parse_config("variant = weight-corrected\nM = 20");
    CHECK(c.kind == ExperimentKind::WeightCorrected);
    REQUIRE(c.memory);
    CHECK(*c.memory == 20);
    CHECK(c.pmd_config().variant() == Variant::WeightCorrected);
}

TEST_CASE("parse errors") {
    CHECK(parse_error("variant = vanilla\nM = banana") == ErrorKind::TypeError);
    CHECK(parse_error("kind = exact-epmd\nfoo = 1") == ErrorKind::UnknownKey);
    CHECK(parse_error("variant = vanilla") == ErrorKind::MissingRequired);
    CHECK(parse_error("tau = 0.1") == ErrorKind::MissingRequired);
    CHECK(parse_error("kind = exact-epmd\ngamma") == ErrorKind::ParseError);
    CHECK(parse_error("kind = exact-epmd\neta = 0.1\nbeta = 0.5") == ErrorKind::InvalidArgument);
    CHECK(parse_error("kind = exact-epmd\nmdp = file") == ErrorKind::MissingRequired);
}

TEST_CASE("empty document with overrides") {
    const ConfigOverrides ov = {{"kind", "vanilla"}, {"M", "5"}, {"beta", "0.7"}, {"seeds", "1:3"},
                                {"iters", "10"}};
    const auto c = parse_config("", ov);
    CHECK(c.kind == ExperimentKind::Vanilla);
    CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(c.effective_beta() == doctest::Approx(0.7));
    CHECK(c.iters == 10);

    const auto o = parse_config("# comment\nkind = exact-epmd\niters = 5  # trailing\n", {{"iters", "7"}});
    CHECK(o.iters == 7);
}

TEST_CASE("csv header only and nan") {
    const auto dir = testing::scratch_dir("csv");
    CsvTable t;
    t.columns = {"iter", "x"};
    t.integer_columns = {true, false};
    emit_csv(t, (dir / "empty.csv").string());
    CHECK(slurp(dir / "empty.csv") == "iter,x\n");

    t.rows = {{0, 1.5}, {1, std::numeric_limits<double>::quiet_NaN()}};
    CHECK(t.has_nan());
    const std::string text = to_csv(t);
    CHECK(text.find("\n1,nan\n") != std::string::npos);
    CHECK(text.find("1.5000000000000000e+00") != std::string::npos);
    CHECK_THROWS_AS(emit_csv(t, (dir / "missing" / "x.csv").string()), Error);
}

TEST_CASE("csv round trip is bit exact") {
    Rng rng(RngSeed{1});
    CsvTable t;
    t.columns = {"k", "a", "b"};
    t.integer_columns = {true, false, false};
    for (int i = 0; i < 500; ++i) {
        const double a = std::ldexp(rng.uniform(-1.0, 1.0), int(rng.index(200)) - 100);
        t.rows.push_back({double(i), a, rng.uniform() * 1e-300});
    }
    t.rows.push_back({500.0, std::numeric_limits<double>::infinity(), -0.0});
    const auto dir = testing::scratch_dir("csv_rt");
    emit_csv(t, (dir / "t.csv").string());
    const auto back = read_csv((dir / "t.csv").string());
    REQUIRE(back.columns == t.columns);
    REQUIRE(back.rows.size() == t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(std::memcmp(&back.rows[i][j], &t.rows[i][j], sizeof(double)) == 0);
        }
    }
}

TEST_CASE("bounds run reports minimum memory") {
    const auto c = parse_config("kind = bounds\ngamma = 0.99\nbeta = 0.95\nM = 265");
    const auto rec = run_experiment(c, false);
    REQUIRE(rec.runs.size() == 1);
    CHECK(rec.runs[0].metrics.at("min_M") == 265);
    CHECK(rec.summary_json.find("\"min_M\": 265") != std::string::npos);
}

TEST_CASE("exact epmd run converges") {
    auto c = parse_config("kind = exact-epmd\nmdp = random\nn_states = 10\nn_actions = 4\nseeds = 1\n"
                          "iters = 200\ntau = 0.1\neta = 0.4");
    const auto rec = run_experiment(c, false);
    REQUIRE(rec.runs.size() == 1);
    CHECK(rec.passed);
    CHECK(rec.runs[0].metrics.at("converged") == 1.0);
    CHECK(rec.runs[0].metrics.at("final_gap") <= 1e-6);
    const auto& tr = rec.runs[0].trace;
    for (const char* col : {"iter", "q_gap_inf", "thm_bound", "improvement_gap", "improvement_bound",
                            "pinsker_lhs", "pinsker_rhs", "xi_delta_inf", "gap_violation"}) {
        CHECK_NOTHROW(tr.column(col));
    }
    CHECK(tr.rows.size() == 200);
}

TEST_CASE("identical configs write identical bytes") {
    const auto d1 = testing::scratch_dir("det1");
    const auto d2 = testing::scratch_dir("det2");
    const std::string text = "kind = weight-corrected\nM = 4\nbeta = 0.7\niters = 30\nseeds = 3,4\nname = det\n";
    run_experiment(parse_config(text, {{"output", d1.string()}}));
    run_experiment(parse_config(text, {{"output", d2.string()}}));
    for (const char* f : {"det_seed3.csv", "det_seed4.csv", "det_agg.csv"}) {
        REQUIRE(std::filesystem::exists(d1 / f));
        CHECK(slurp(d1 / f) == slurp(d2 / f));
    }
    const auto s1 = slurp(d1 / "det_summary.json");
    CHECK(s1.find("\"passed\"") != std::string::npos);
}

TEST_CASE("aggregate means and deviations") {
    SeedRun a, b;
    a.trace.columns = b.trace.columns = {"iter", "v"};
    a.trace.integer_columns = b.trace.integer_columns = {true, false};
    a.trace.rows = {{0, 1.0}, {1, 2.0}};
    b.trace.rows = {{0, 3.0}, {1, 2.0}};
    const auto agg = aggregate_runs({a, b});
    const auto mean = agg.column("v_mean");
    const auto sd = agg.column("v_std");
    CHECK(agg.rows[0][mean] == 2.0);
    CHECK(agg.rows[0][sd] == doctest::Approx(std::sqrt(2.0)));
    CHECK(agg.rows[1][sd] == 0.0);
}

TEST_CASE("sequence run") {
    const auto c = parse_config("kind = sequence\ngamma = 0.99\nbeta = 0.95\nM = 265\nk_max = 1000\nstride = 1");
    const auto rec = run_experiment(c, false);
    const auto& tr = rec.runs.at(0).trace;
    CHECK(tr.columns.at(1) == "x_k");
    CHECK(tr.columns.at(2) == "x_prime_k");
    CHECK(tr.columns.at(3) == "x_double_prime_k");
    CHECK(tr.rows.size() == 1001);
}

TEST_CASE("presets parse") {
    const auto names = preset_names();
    for (const char* n : {"preset-thm31", "preset-thm42-residual", "preset-thm44", "preset-fig-seqxk",
                          "preset-staq-chain"}) {
        CHECK(std::find(names.begin(), names.end(), n) != names.end());
        CHECK_FALSE(parse_runs(preset_text(n)).empty());
    }
    CHECK(parse_runs(preset_text("preset-fig-seqxk")).size() == 2);
    try {
        preset_text("preset-none");
        FAIL("unknown preset accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UnknownKey);
    }
}

TEST_CASE("mdp file source") {
    const auto dir = testing::scratch_dir("mdpfile");
    const auto mdp = chain_mdp(4, 0.1, 0.8);
    save_mdp(mdp, (dir / "m.json").string());
    const auto c = parse_config("kind = exact-epmd\nmdp = file\nmdp_file = " + (dir / "m.json").string());
    CHECK(build_mdp(c.mdp, 0) == mdp);
}
