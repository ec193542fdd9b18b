#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "loopsoup/loopsoup.hpp"

using namespace loopsoup;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("ini parsing accepts the documented shape", "[io]") {
    const std::string text =
        "# leading comment\n"
        "[model]\n"
        "beta = 2.5   ; trailing comment\n"
        "  mu =  -0.25\n"
        "\n"
        "[empty_section]\n"
        "[run]\n"
        "out = results/a\n";
    const IniFile f = parse_ini(text);
    CHECK(f.sections.at("model").at("beta") == "2.5");
    CHECK(f.sections.at("model").at("mu") == "-0.25");
    CHECK(f.sections.at("run").at("out") == "results/a");
    CHECK(f.sections.count("empty_section") == 1);
    CHECK(f.sections.at("empty_section").empty());
}

TEST_CASE("ini parsing rejects malformed input with line numbers", "[io]") {
    CHECK_THROWS_WITH(parse_ini("[model\nbeta = 1\n"),
                      ContainsSubstring("line 1") && ContainsSubstring("malformed section"));
    CHECK_THROWS_WITH(parse_ini("[]\n"), ContainsSubstring("empty section name"));
    CHECK_THROWS_WITH(parse_ini("[model]\nbeta 1\n"),
                      ContainsSubstring("line 2") && ContainsSubstring("expected key = value"));
    CHECK_THROWS_WITH(parse_ini("[model]\n= 1\n"), ContainsSubstring("empty key"));
    CHECK_THROWS_WITH(parse_ini("beta = 1\n"), ContainsSubstring("outside any [section]"));
    CHECK_THROWS_WITH(parse_ini("[model]\nbeta = 1\nbeta = 2\n"),
                      ContainsSubstring("duplicate key"));
}

TEST_CASE("typed config access", "[io]") {
    ConfigReader r(parse_ini("[a]\nx = 2.5\nn = 12\nflag = true\nv = 1 2.5 -3\ns = text\n"));
    CHECK(r.get_double("a", "x", 0.0) == 2.5);
    CHECK(r.get_long("a", "n", 0) == 12);
    CHECK(r.get_bool("a", "flag", false));
    CHECK(r.get_string("a", "s", "") == "text");
    const std::vector<double> v = r.get_doubles("a", "v");
    REQUIRE(v.size() == 3);
    CHECK(v[1] == 2.5);
    CHECK(r.get_double("a", "missing", 7.5) == 7.5);
    CHECK_NOTHROW(r.finish()); // everything consumed

    ConfigReader bad1(parse_ini("[a]\nn = 12x\n"));
    CHECK_THROWS_WITH(bad1.get_long("a", "n", 0), ContainsSubstring("trailing junk"));
    ConfigReader bad2(parse_ini("[a]\nx = pi\n"));
    CHECK_THROWS_WITH(bad2.get_double("a", "x", 0.0), ContainsSubstring("not a number"));
    ConfigReader bad3(parse_ini("[a]\nflag = yes\n"));
    CHECK_THROWS_WITH(bad3.get_bool("a", "flag", false), ContainsSubstring("expected true/false"));

    ConfigReader leftover(parse_ini("[a]\nx = 1\nmystery = 2\n"));
    leftover.get_double("a", "x", 0.0);
    CHECK_THROWS_WITH(leftover.finish(), ContainsSubstring("mystery: unknown key"));

    ConfigReader sections(parse_ini("[weird]\nx = 1\n"));
    CHECK_THROWS_WITH(sections.expect_sections({"a", "b"}),
                      ContainsSubstring("[weird]: unknown section"));
}

TEST_CASE("run configuration resolves defaults and overrides", "[io]") {
    SECTION("empty text gives pure defaults") {
        const RunConfig c = load_run_config("");
        CHECK(c.d == 3);
        CHECK(c.beta == 1.0);
        CHECK(c.mu == 0.0);
        CHECK(c.side == 0.0);
        REQUIRE(c.lower.size() == 3);
        CHECK(c.upper[2] == 2.0);
        CHECK(c.m == 16);
        CHECK(c.potential.family == "zero");
        CHECK(c.j_max == 64);
        CHECK(c.mcmc.steps == 100000);
        CHECK(c.replicas == 1);
        CHECK(c.psi == "count");
        CHECK_FALSE(c.cphi_hat.has_value());
    }

    SECTION("full configuration round") {
        const std::string text =
            "[model]\nd = 3\nbeta = 0.5\nmu = -0.2\n"
            "[domain]\nside = 3\n"
            "[grid]\nm = 8\n"
            "[potential]\nfamily = gaussian\namplitude = 2\nsigma = 0.5\nr_cut = 4\n"
            "[measure]\nj_max = 12\ntail_tol = 1e-6\ncphi_hat = 0.4\n"
            "[mcmc]\nsteps = 5000\nburnin = 500\nthinning = 5\np_birth = 0.4\np_death = 0.4\n"
            "p_rebridge = 0.2\nrejection_cap = 64\nrecheck_interval = 128\nwarm_start = false\n"
            "[run]\nreplicas = 3\nseed = 99\nout = /tmp/x\nsnapshots = true\npsi = length_power:2\n";
        const RunConfig c = load_run_config(text);
        CHECK(c.beta == 0.5);
        CHECK(c.side == 3.0);
        CHECK(c.lower.empty()); // centered cube overrides corners
        CHECK(c.potential.family == "gaussian");
        CHECK(c.potential.r_cut == 4.0);
        REQUIRE(c.cphi_hat.has_value());
        CHECK(*c.cphi_hat == 0.4);
        CHECK(c.mcmc.thinning == 5);
        CHECK_FALSE(c.mcmc.warm_start);
        CHECK(c.replicas == 3);
        CHECK(c.seed == 99);
        CHECK(c.snapshots);
        CHECK(c.psi == "length_power:2");
    }

    SECTION("validation failures") {
        CHECK_THROWS_WITH(load_run_config("[model]\nd = 5\n"),
                          ContainsSubstring("only 3 and 4"));
        CHECK_THROWS_WITH(load_run_config("[model]\nbeta = 0\n"),
                          ContainsSubstring("must be positive"));
        CHECK_THROWS_WITH(load_run_config("[domain]\nlower = 0 0\n"),
                          ContainsSubstring("expected 3 numbers"));
        CHECK_THROWS_WITH(load_run_config("[domain]\nlower = 0 0 5\n"),
                          ContainsSubstring("lower must be below upper"));
        CHECK_THROWS_WITH(load_run_config("[grid]\nm = 1\n"),
                          ContainsSubstring("at least 2 steps"));
        CHECK_THROWS_WITH(load_run_config("[measure]\nj_max = 0\n"),
                          ContainsSubstring("at least 1"));
        CHECK_THROWS_WITH(load_run_config("[potential]\nfamily = coulomb\n"),
                          ContainsSubstring("unknown family"));
        CHECK_THROWS_WITH(load_run_config("[run]\npsi = entropy\n"),
                          ContainsSubstring("unknown observable"));
        CHECK_THROWS_WITH(load_run_config("[run]\nreplicas = 0\n"),
                          ContainsSubstring("at least 1"));
        CHECK_THROWS_WITH(load_run_config("[model]\nbither = 1\n"),
                          ContainsSubstring("unknown key"));
        CHECK_THROWS_WITH(load_run_config("[modell]\nd = 3\n"),
                          ContainsSubstring("unknown section"));
        CHECK_THROWS_WITH(load_run_config("[mcmc]\np_birth = 0.9\n"),
                          ContainsSubstring("sum to 1"));
    }
}

TEST_CASE("potential factory dispatch", "[io]") {
    PotentialConfig p;
    p.family = "hard_core";
    p.radius = 0.7;
    CHECK(make_potential(p).has_hard_core());
    CHECK(make_potential(p).phi(0.5) == inf_energy);
    CHECK(make_potential(p).phi(0.8) == 0.0);

    p = PotentialConfig{};
    p.family = "top_hat";
    p.amplitude = 2.5;
    p.radius = 0.4;
    CHECK(make_potential(p).phi(0.3) == 2.5);

    p = PotentialConfig{};
    p.family = "gaussian";
    p.amplitude = 3.0;
    p.sigma = 1.0;
    CHECK(make_potential(p).phi(0.0) == 3.0);
    p.r_cut = 0.5;
    CHECK(make_potential(p).phi(0.6) == 0.0);
    CHECK(make_potential(p).cutoff() == 0.5);
    p.r_cut = -1.0;
    CHECK_THROWS_AS(make_potential(p), config_error);
}

TEST_CASE("observable spec parsing", "[io]") {
    CHECK(parse_psi("count").kind == PsiSpec::Kind::count);
    const PsiSpec lp = parse_psi("length_power:2");
    CHECK(lp.kind == PsiSpec::Kind::length_power);
    CHECK(lp.power == 2.0);
    const PsiSpec dp = parse_psi("diameter_power:1.5");
    CHECK(dp.kind == PsiSpec::Kind::diameter_power);
    CHECK(dp.power == 1.5);
    const PsiSpec la = parse_psi("length_at_least:3");
    CHECK(la.kind == PsiSpec::Kind::length_at_least);
    CHECK(la.threshold == 3);
    CHECK_THROWS_AS(parse_psi("count:1"), config_error);
    CHECK_THROWS_AS(parse_psi("length_power"), config_error);
    CHECK_THROWS_AS(parse_psi("entropy"), config_error);
}

TEST_CASE("resolved text is canonical and hashes are stable", "[io]") {
    const RunConfig a = load_run_config("[model]\nbeta = 0.5\n");
    const RunConfig b = load_run_config("[model]\nbeta = 0.5\n# different comment\n");
    CHECK(resolved_text(a) == resolved_text(b));
    CHECK(resolved_text(a).find("beta = 0.5\n") != std::string::npos);

    const RunConfig c = load_run_config("[domain]\nside = 2\n[measure]\ncphi_hat = 0.25\n");
    const std::string rc = resolved_text(c);
    CHECK(rc.find("side = 2\n") != std::string::npos);
    CHECK(rc.find("lower =") == std::string::npos);
    CHECK(rc.find("cphi_hat = 0.25\n") != std::string::npos);

    // The fingerprint must not depend on where the artifacts are written.
    RunConfig d1 = a, d2 = a;
    d1.out_dir = "results/a";
    d2.out_dir = "/somewhere/else";
    CHECK(resolved_text(d1) == resolved_text(d2));

    // FNV-1a 64 reference values
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex(resolved_text(a)) == fnv1a_hex(resolved_text(b)));
}

TEST_CASE("record files are deterministic byte for byte", "[io]") {
    ObservableRecord r1;
    r1.step = 10;
    r1.n_loops = 2;
    r1.n_particles = 3;
    r1.max_diam = 1.25;
    r1.n_psi = 3;
    r1.e_self = 0.5;
    ObservableRecord r2 = r1;
    r2.step = 20;
    r2.acc_birth = 0.25;

    const nlohmann::json j = to_json(r1);
    CHECK(j.at("step") == 10);
    CHECK(j.at("N") == 3.0);
    CHECK(j.at("S") == 1.25);
    CHECK(j.at("Npsi") == 3.0);

    const std::string p1 = temp_path("loopsoup_obs_a.jsonl");
    const std::string p2 = temp_path("loopsoup_obs_b.jsonl");
    for (const std::string& p : {p1, p2}) {
        RecordWriter w(p, "deadbeefdeadbeef", "obs.r0");
        w.write(r1);
        w.write(r2);
    }
    const std::string body = slurp(p1);
    CHECK(body == slurp(p2));
    CHECK(body.find("obs.v1") != std::string::npos);
    CHECK(body.find("deadbeefdeadbeef") != std::string::npos);
    std::remove(p1.c_str());
    std::remove(p2.c_str());

    const Verdict v{"acceptance", "free_gas_mean", true, nlohmann::json{{"z", 1.5}}};
    const nlohmann::json vj = to_json(v);
    CHECK(vj.at("suite") == "acceptance");
    CHECK(vj.at("pass") == true);
}

TEST_CASE("snapshots round-trip losslessly", "[io]") {
    const TimeGrid g = make_time_grid(0.75, 8);
    Philox rng(44, 0, StreamPurpose::paths);
    Configuration<3> c;
    c.loops.push_back(sample_loop(Vec<3>{{0.1, -2.0, 3.5}}, 1, g, rng));
    c.loops.push_back(sample_loop(Vec<3>{{-0.37, 0.0, 1.0e-7}}, 3, g, rng));

    const std::string p1 = temp_path("loopsoup_snap_a.txt");
    const std::string p2 = temp_path("loopsoup_snap_b.txt");
    save_snapshot(p1, c, g);

    const auto [back, g2] = load_snapshot<3>(p1);
    CHECK(g2.beta == g.beta);
    CHECK(g2.steps_per_beta == g.steps_per_beta);
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        REQUIRE(back.loops[i].j == c.loops[i].j);
        REQUIRE(back.loops[i].points.size() == c.loops[i].points.size());
        for (std::size_t k = 0; k < c.loops[i].points.size(); ++k)
            for (int d = 0; d < 3; ++d)
                REQUIRE(back.loops[i].points[k][d] == c.loops[i].points[k][d]);
    }

    // second generation write: identical bytes
    save_snapshot(p2, back, g2);
    CHECK(slurp(p1) == slurp(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("snapshot failure modes", "[io]") {
    const TimeGrid g = make_time_grid(1.0, 4);
    Philox rng(45, 0, StreamPurpose::paths);
    Configuration<3> c;
    c.loops.push_back(sample_loop(Vec<3>{{0.0, 0.0, 0.0}}, 2, g, rng));
    std::ostringstream out;
    write_snapshot(out, c, g);
    const std::string good = out.str();

    SECTION("wrong tag") {
        std::istringstream in("snapshot.v9\nd 3\n");
        CHECK_THROWS_AS(read_snapshot<3>(in), structural_error);
    }
    SECTION("dimension mismatch") {
        std::istringstream in(good);
        CHECK_THROWS_AS(read_snapshot<4>(in), structural_error);
    }
    SECTION("truncation") {
        std::istringstream in(good.substr(0, good.size() / 2));
        CHECK_THROWS_AS(read_snapshot<3>(in), structural_error);
    }
    SECTION("bad period count") {
        std::istringstream in("snapshot.v1\nd 3\nbeta 1\nm 4\nloops 1\n0 1 2 3\n");
        CHECK_THROWS_AS(read_snapshot<3>(in), structural_error);
    }
}
