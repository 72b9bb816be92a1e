#include "thinwall/scenario.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

using namespace thinwall;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<SurfaceChart> chart(SurfaceChart c) { return std::make_shared<SurfaceChart>(std::move(c)); }

SlabGrid small_slab(SurfaceChart c, TransverseRule rule, int nu = 8, int nv = 6, int n3 = 5) {
    return SlabGrid::build(SurfaceGrid::build(chart(std::move(c)), nu, nv), n3, 0.05, rule);
}

SpectrumResult solve(const DiscreteOperator& op, int k) {
    SolverConfig c;
    c.k = k;
    return solve_lowest(op, c);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::path(::testing::TempDir()) / ("thinwall_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(THINWALL_CLI) + " " + args + " >/dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2); }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) rows.push_back(detail::split_csv_line(line));
    return rows;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(Schmidt, ProductStateIsRankOne) {
    const auto slab = small_slab(presets::torus(2, 1), TransverseRule::Dirichlet);
    CVec psi(slab.size());
    for (int k = 0; k < slab.n3(); ++k) {
        for (int s = 0; s < slab.n_surface(); ++s) {
            const auto& n = slab.surface().node(s);
            const double f = std::cos(n.u) + 2.0 + 0.3 * std::sin(2 * n.v);
            const double g = std::cos(kPi * slab.x3(k) / 0.1);
            psi[slab.index(s, k)] = f * g / std::sqrt(slab.weight(s, k));
        }
    }
    const auto r = schmidt_spectrum(psi, slab, 3);
    EXPECT_LE(r.separability_index, 1e-10);
    EXPECT_EQ(r.singular_values.size(), 3u);
    EXPECT_EQ(r.n3, slab.n3());
}

TEST(Schmidt, InvariantUnderPhaseAndScale) {
    const auto slab = small_slab(presets::sphere(1.0), TransverseRule::Dirichlet);
    CVec psi = CVec::Random(slab.size());
    const double a = schmidt_spectrum(psi, slab, 4).separability_index;
    const double b = schmidt_spectrum(psi * std::polar(3.7, 1.2), slab, 4).separability_index;
    EXPECT_NEAR(a, b, 1e-12);
    try {
        schmidt_spectrum(CVec::Ones(5), slab, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
    }
}

TEST(Schmidt, CylinderDirichletGroundStateSeparates) {
    const auto slab = small_slab(presets::cylinder(1, 1), TransverseRule::Dirichlet, 12, 8, 6);
    const auto op = assemble_slab_hamiltonian(slab, fields::zero(), {1, 0}, BoundaryCondition::dirichlet(),
                                              Confinement::none());
    const auto r = solve(op, 1);
    EXPECT_LE(schmidt_spectrum(r.eigenvectors.col(0), slab, 2).separability_index, 1e-6);
}

// Ground state of the torus under the Neumann constraint vs a sphere slab at matched resolution.
TEST(Schmidt, TorusNeumannGroundStateIsEntangled) {
    auto index = [](SurfaceChart c) {
        const auto slab = small_slab(std::move(c), TransverseRule::Neumann, 12, 8, 6);
        const auto op = assemble_slab_hamiltonian(slab, fields::zero(), {1, 0}, BoundaryCondition::neumann(2, 2),
                                                  Confinement::none());
        return schmidt_spectrum(solve(op, 1).eigenvectors.col(0), slab, 2).separability_index;
    };
    EXPECT_GE(index(presets::torus(2, 1)), 100 * std::max(index(presets::sphere(1)), 1e-8));
}

// ---------------------------------------------------------------------------

TEST(Compare, NeutralColumnsAgreeOnEveryPreset) {
    const std::vector<SurfaceChart> charts = {presets::plane(),         presets::cylinder(1, 1),
                                              presets::sphere(1),       presets::torus(2, 1),
                                              presets::catenoid(1, 1), presets::helicoid(1, 1)};
    const auto f = fields::uniform(Vec3(0.1, 0.2, 1.0));
    for (const auto& c : charts) {
        const auto g = SurfaceGrid::build(chart(c), 10, 10);
        const auto rn = solve(assemble_naive_hamiltonian(g, f, {1, 0}), 4);
        const auto rv = solve(assemble_variational_hamiltonian(g, f, {1, 0}), 4);
        const auto rep = compare_variants(rn, rv);
        for (const auto& row : rep.rows) EXPECT_LE(std::abs(row.naive - row.variational), 1e-8) << c.name;
        EXPECT_EQ(rep.verdict, "both spectra are real");
    }
}

TEST(Compare, SphereUniformFieldFlagsNaive) {
    const auto g = SurfaceGrid::build(chart(presets::sphere(1)), 12, 24);
    const auto f = fields::uniform(Vec3(0, 0, 1));
    const auto n = assemble_naive_hamiltonian(g, f, {1, 1});
    const auto v = assemble_variational_hamiltonian(g, f, {1, 1});
    SolverConfig c;
    c.k = 8;
    c.shift = cplx(0, 0);
    const auto delta = anomalous_delta(n, v);
    const auto rep = compare_variants(solve_lowest(n, c), solve_lowest(v, c), &delta);
    EXPECT_GT(rep.max_im_naive, 0.1);
    EXPECT_LE(rep.max_im_variational, 1e-8);
    EXPECT_TRUE(rep.naive_complex);
    EXPECT_FALSE(rep.variational_complex);
    EXPECT_TRUE(rep.has_anomalous_profile);
    EXPECT_NE(rep.to_text().find("naive spectrum is complex"), std::string::npos);
    EXPECT_TRUE(rep.to_json().contains("anomalous_diagonal"));
}

TEST(Compare, CatenoidHasNoAnomalousTerm) {
    const auto g = SurfaceGrid::build(chart(presets::catenoid(1, 1)), 12, 10);
    const auto f = fields::uniform(Vec3(0.3, 0, 1));
    const auto n = assemble_naive_hamiltonian(g, f, {1, 1});
    const auto v = assemble_variational_hamiltonian(g, f, {1, 1});
    const auto delta = anomalous_delta(n, v);
    const auto rep = compare_variants(solve(n, 4), solve(v, 4), &delta);
    EXPECT_EQ(rep.anomalous_max, 0.0);
    for (const auto& row : rep.rows) EXPECT_EQ(row.naive, row.variational);
}

TEST(Compare, RejectsDifferentScenarios) {
    const auto f = fields::uniform(Vec3(0, 0, 1));
    const auto a = solve(assemble_naive_hamiltonian(SurfaceGrid::build(chart(presets::sphere(1)), 8, 12), f, {1, 1}), 3);
    const auto b =
        solve(assemble_variational_hamiltonian(SurfaceGrid::build(chart(presets::sphere(1)), 8, 12), f, {2, 1}), 3);
    try {
        compare_variants(a, b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MetadataMismatch);
    }
}

TEST(Probe, NeutralDerivativesVanish) {
    const auto g = SurfaceGrid::build(chart(presets::torus(2, 1)), 12, 8);
    for (bool naive : {true, false}) {
        AssembleFn fn = [&](const VectorPotentialField& f) {
            return naive ? assemble_naive_hamiltonian(g, f, {1, 0}) : assemble_variational_hamiltonian(g, f, {1, 0});
        };
        FieldFamily fam = [](double s) { return fields::scaled(fields::uniform(Vec3(0, 0, 1)), s); };
        for (double d : field_derivative_probe(fn, fam, 0.3, 1e-3, 3)) EXPECT_NEAR(d, 0.0, 1e-10);
    }
}

TEST(Probe, RingModesShiftByChargeOverMass) {
    const auto g = SurfaceGrid::build(chart(presets::cylinder(1.0, 0.5)), 128, 4, std::nullopt, EdgeRule::Neumann);
    const ParticleParams pp{1.0, 1.0};
    FieldFamily fam = [](double s) { return fields::azimuthal(s, 1.0); };
    SolverConfig c;
    c.shift = cplx(-0.1, 0);
    AssembleFn var = [&](const VectorPotentialField& f) { return assemble_variational_hamiltonian(g, f, pp); };
    AssembleFn nai = [&](const VectorPotentialField& f) { return assemble_naive_hamiltonian(g, f, pp); };
    const auto dv = field_derivative_probe(var, fam, 0.0, 1e-3, 3, c);
    const auto dn = field_derivative_probe(nai, fam, 0.0, 1e-3, 3, c);
    EXPECT_NEAR(dv[0], 0.0, 1e-8);
    EXPECT_NEAR(std::max(dv[1], dv[2]), 1.0, 0.02);
    EXPECT_NEAR(std::min(dv[1], dv[2]), -1.0, 0.02);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(dn[i], dv[i], 1e-10);
    EXPECT_THROW(field_derivative_probe(var, fam, 0.0, 0.0, 3, c), Error);
}

// ---------------------------------------------------------------------------

TEST(Scenario, RoundTripAndPresetFiles) {
    for (const auto& name : preset_names()) {
        const Scenario s = preset(name);
        EXPECT_EQ(Scenario::from_json(s.to_json()), s) << name;
        EXPECT_EQ(Scenario::from_json(s.to_json()).to_json().dump(), s.to_json().dump());
        const auto file = fs::path(THINWALL_SOURCE_DIR) / "scenarios" / (name + ".json");
        EXPECT_EQ(load_scenario(file.string()), s) << name;
    }
}

TEST(Scenario, UnknownKeysAreErrors) {
    auto j = preset_json("AC4");
    j["solver"]["tolerance"] = 1e-6;
    try {
        Scenario::from_json(j);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Config);
    }
    auto k = preset_json("AC1");
    k["surface"]["radius"] = 2.0;
    EXPECT_THROW(Scenario::from_json(k), Error);
    auto v = preset_json("AC1");
    v["variant"] = "exact";
    EXPECT_THROW(Scenario::from_json(v), Error);
    auto f = preset_json("AC1");
    f["field"] = {{"preset", "sources"}, {"files", {{{"csv", "/nonexistent.csv"}, {"sidecar", "/nonexistent.json"}}}}};
    EXPECT_THROW(Scenario::from_json(f), Error);
}

TEST(Scenario, GeometryPipelineOutputs) {
    const auto out = fresh_dir("geometry");
    RunContext ctx{out, 1, "test"};
    const auto o = run_geometry(preset("AC1"), ctx);
    EXPECT_EQ(o.exit_code, 0);
    const auto rows = read_csv(out / "geometry.csv");
    ASSERT_EQ(rows[0], (std::vector<std::string>{"u", "v", "M", "K_gauss", "V0", "det_g"}));
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(std::abs(std::stod(rows[i][4])), 1e-10);
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    EXPECT_EQ(manifest["tool"], "thinwall");
    EXPECT_EQ(manifest["version"], kVersion);
    EXPECT_TRUE(manifest["units"].get<std::string>().find("hbar = c = 1") != std::string::npos);
    EXPECT_TRUE(manifest["grid_hashes"].contains("surface"));

    auto torus = preset("AC2");
    const auto tout = fresh_dir("geometry_torus");
    run_geometry(torus, {tout, 1, "test"});
    const auto trows = read_csv(tout / "geometry.csv");
    bool pos = false, neg = false;
    for (std::size_t i = 1; i < trows.size(); ++i) {
        const double k = std::stod(trows[i][3]);
        pos |= k > 0.1;
        neg |= k < -0.1;
    }
    EXPECT_TRUE(pos && neg);
}

TEST(Cli, CircleSpectrumAndManifestReplay) {
    const auto out = fresh_dir("circle");
    const auto cfg = fs::path(THINWALL_SOURCE_DIR) / "scenarios" / "circle.json";
    ASSERT_EQ(run_cli("spectrum --config " + cfg.string() + " --out " + out.string()), 0);
    const auto rows = read_csv(out / "spectrum.csv");
    ASSERT_EQ(rows[0], (std::vector<std::string>{"index", "re", "im", "residual", "converged", "cluster"}));
    const double expect[] = {0, 0.5, 0.5, 2, 2};
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(std::stod(rows[i + 1][1]), expect[i], 1e-3);

    const auto again = fresh_dir("circle_replay");
    ASSERT_EQ(run_cli("spectrum --config " + (out / "manifest.json").string() + " --out " + again.string()), 0);
    const auto a = nlohmann::json::parse(slurp(out / "spectrum.json"));
    const auto b = nlohmann::json::parse(slurp(again / "spectrum.json"));
    for (std::size_t i = 0; i < a["eigenvalues"].size(); ++i) {
        EXPECT_NEAR(a["eigenvalues"][i]["re"].get<double>(), b["eigenvalues"][i]["re"].get<double>(), 1e-12);
    }
}

TEST(Cli, NeutralVariantsGiveIdenticalColumns) {
    auto j = preset_json("AC4");
    j["particle"]["charge"] = 0.0;
    const auto dir = fresh_dir("neutral");
    std::string cols[2];
    int i = 0;
    for (const char* v : {"naive", "variational"}) {
        j["variant"] = v;
        write_json(dir / (std::string(v) + ".json"), j);
        ASSERT_EQ(run_cli("spectrum --config " + (dir / (std::string(v) + ".json")).string() + " --out " +
                          (dir / v).string()),
                  0);
        for (const auto& row : read_csv(dir / v / "spectrum.csv")) cols[i] += row[1] + "|" + row[2] + "\n";
        ++i;
    }
    EXPECT_EQ(cols[0], cols[1]);
}

TEST(Cli, ExitCodes) {
    const auto dir = fresh_dir("exit");
    // Config errors.
    auto bad = preset_json("AC1");
    bad["grid"]["cells"] = 4;
    write_json(dir / "bad.json", bad);
    EXPECT_EQ(run_cli("geometry --config " + (dir / "bad.json").string() + " --out " + (dir / "a").string()), 2);
    EXPECT_EQ(run_cli("geometry --config " + (dir / "missing.json").string()), 2);
    EXPECT_EQ(run_cli("geometry --preset AC1 --bogus"), 2);
    EXPECT_EQ(run_cli("spectrum --preset AC9"), 2);
    // Numerical error: slab thicker than the curvature allows.
    auto thick = preset_json("AC6");
    thick["grid"]["eps"] = 0.3;
    write_json(dir / "thick.json", thick);
    EXPECT_EQ(run_cli("spectrum --config " + (dir / "thick.json").string() + " --out " + (dir / "b").string()), 4);
    // Convergence failure: Krylov path with a single restart cycle.
    auto slow = preset_json("AC8");
    slow["grid"] = {{"n_u", 48}, {"n_v", 96}};
    slow["solver"]["max_iter"] = 1;
    slow["solver"]["restart"] = 20;
    write_json(dir / "slow.json", slow);
    EXPECT_EQ(run_cli("spectrum --config " + (dir / "slow.json").string() + " --out " + (dir / "c").string()), 3);
    const auto rows = read_csv(dir / "c" / "spectrum.csv");
    bool flagged = false;
    for (std::size_t i = 1; i < rows.size(); ++i) flagged |= rows[i][4] == "0";
    EXPECT_TRUE(flagged);
    EXPECT_EQ(nlohmann::json::parse(slurp(dir / "c" / "manifest.json"))["exit_code"], 3);
}

TEST(Cli, SeedOverrideIsRecorded) {
    const auto dir = fresh_dir("seed");
    ASSERT_EQ(run_cli("geometry --preset AC1 --seed 99 --threads 1 --out " + dir.string()), 0);
    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(m["scenario"]["solver"]["seed"], 99);
    EXPECT_EQ(m["threads"], 1);
}

TEST(Cli, GaugeCheckSeparabilityAndXiCheck) {
    const auto dir = fresh_dir("checks");
    nlohmann::json g = {{"surface", {{"preset", "sphere"}, {"R", 1.0}}},
                        {"field", {{"preset", "uniform"}, {"a", {0.0, 0.0, 1.0}}}}};
    write_json(dir / "g.json", g);
    ASSERT_EQ(run_cli("gauge-check --config " + (dir / "g.json").string() + " --out " + (dir / "g").string()), 0);
    const auto gj = nlohmann::json::parse(slurp(dir / "g" / "gauge_check.json"));
    EXPECT_LE(gj["levels"][0]["max_identity_error"].get<double>(), 1e-3);

    nlohmann::json s = {{"surface", {{"preset", "cylinder"}, {"R", 1.0}, {"L", 1.0}}},
                        {"grid", {{"n_u", 12}, {"n_v", 8}, {"n3", 6}, {"eps", 0.05}}},
                        {"variant", "slab3d"},
                        {"boundary", {{"kind", "dirichlet"}}},
                        {"solver", {{"k", 1}}},
                        {"analysis", {{"n_states", 1}}}};
    write_json(dir / "s.json", s);
    ASSERT_EQ(run_cli("separability --config " + (dir / "s.json").string() + " --out " + (dir / "s").string()), 0);
    const auto sj = nlohmann::json::parse(slurp(dir / "s" / "separability.json"));
    EXPECT_LE(sj["max_index"].get<double>(), 1e-6);
    EXPECT_EQ(read_csv(dir / "s" / "schmidt.csv")[0][0], "state");

    ASSERT_EQ(run_cli("xi-check --preset AC6 --out " + (dir / "x").string()), 0);
    const auto xj = nlohmann::json::parse(slurp(dir / "x" / "xi_check.json"));
    EXPECT_GE(xj["levels"][1]["ratio"].get<double>(), 1.8);

    ASSERT_EQ(run_cli("compare --preset AC4 --out " + (dir / "c").string()), 0);
    const auto cj = nlohmann::json::parse(slurp(dir / "c" / "compare.json"));
    EXPECT_TRUE(cj["naive_complex"].get<bool>());
    EXPECT_FALSE(cj["variational_complex"].get<bool>());
}
