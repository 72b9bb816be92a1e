#pragma once

// Scenario files and the end-to-end pipelines behind the command-line tool.

#include "thinwall/analysis.hpp"
#include "thinwall/io.hpp"

#include <filesystem>
#include <map>
#include <set>

namespace thinwall {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kUnits = "natural units: hbar = c = 1; Biot-Savart prefactor mu0/(4 pi) = 1";

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorKind::Config, where + " must be an object");
    for (const auto& [k, _] : j.items()) {
        if (!allowed.count(k)) throw Error(ErrorKind::Config, "unknown key '" + k + "' in " + where);
    }
}

template <class T>
T get_or(const nlohmann::json& j, const std::string& key, T def) {
    if (!j.contains(key)) return def;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Config, "bad value for '" + key + "': " + e.what());
    }
}

inline Vec3 vec3_of(const nlohmann::json& j, const std::string& key) {
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 3) throw Error(ErrorKind::Config, "'" + key + "' must have 3 components");
    return {v[0], v[1], v[2]};
}

inline EdgeRule edge_rule_of(const std::string& s) {
    if (s == "periodic") return EdgeRule::Periodic;
    if (s == "dirichlet") return EdgeRule::Dirichlet;
    if (s == "neumann") return EdgeRule::Neumann;
    throw Error(ErrorKind::Config, "unknown edge rule '" + s + "'");
}

}  // namespace detail

struct SurfaceSpec {
    std::string preset = "sphere";
    std::map<std::string, double> params;
    std::string path;  // csv charts
    bool periodic_u = false, periodic_v = false;
    std::string derivatives = "analytic";
    double h_geom = 1e-4;

    static const std::map<std::string, std::map<std::string, double>>& defaults() {
        static const std::map<std::string, std::map<std::string, double>> d = {
            {"plane", {{"Lx", kPi}, {"Ly", kPi}}},
            {"cylinder", {{"R", 1.0}, {"L", 1.0}}},
            {"sphere", {{"R", 1.0}, {"pole_margin", 1e-3}}},
            {"torus", {{"R", 2.0}, {"r", 1.0}}},
            {"catenoid", {{"a", 1.0}, {"vmax", 1.0}}},
            {"helicoid", {{"a", 1.0}, {"vmax", 1.0}}},
            {"csv", {}},
        };
        return d;
    }

    static SurfaceSpec from_json(const nlohmann::json& j) {
        SurfaceSpec s;
        if (!j.is_object() || !j.contains("preset")) throw Error(ErrorKind::Config, "surface needs a 'preset'");
        s.preset = j.at("preset").get<std::string>();
        const auto it = defaults().find(s.preset);
        if (it == defaults().end()) throw Error(ErrorKind::Config, "unknown surface preset '" + s.preset + "'");
        std::set<std::string> allowed = {"preset", "derivatives", "h_geom"};
        for (const auto& [k, _] : it->second) allowed.insert(k);
        if (s.preset == "csv") allowed.insert({"path", "periodic_u", "periodic_v"});
        detail::check_keys(j, allowed, "surface");
        for (const auto& [k, v] : it->second) s.params[k] = detail::get_or(j, k, v);
        s.derivatives = detail::get_or<std::string>(j, "derivatives", s.preset == "csv" ? "fd" : "analytic");
        if (s.derivatives != "analytic" && s.derivatives != "fd") {
            throw Error(ErrorKind::Config, "surface.derivatives must be 'analytic' or 'fd'");
        }
        if (s.preset == "csv" && s.derivatives != "fd") throw Error(ErrorKind::Config, "csv charts use fd derivatives");
        s.h_geom = detail::get_or(j, "h_geom", 1e-4);
        if (s.preset == "csv") {
            s.path = j.at("path").get<std::string>();
            s.periodic_u = detail::get_or(j, "periodic_u", false);
            s.periodic_v = detail::get_or(j, "periodic_v", false);
        }
        return s;
    }
    nlohmann::json to_json() const {
        nlohmann::json j = {{"preset", preset}, {"derivatives", derivatives}, {"h_geom", h_geom}};
        for (const auto& [k, v] : params) j[k] = v;
        if (preset == "csv") {
            j["path"] = path;
            j["periodic_u"] = periodic_u;
            j["periodic_v"] = periodic_v;
        }
        return j;
    }
    bool operator==(const SurfaceSpec&) const = default;

    std::shared_ptr<SurfaceChart> build() const {
        auto p = [&](const char* k) { return params.at(k); };
        SurfaceChart c;
        if (preset == "plane") c = presets::plane(p("Lx"), p("Ly"));
        else if (preset == "cylinder") c = presets::cylinder(p("R"), p("L"));
        else if (preset == "sphere") c = presets::sphere(p("R"), p("pole_margin"));
        else if (preset == "torus") c = presets::torus(p("R"), p("r"));
        else if (preset == "catenoid") c = presets::catenoid(p("a"), p("vmax"));
        else if (preset == "helicoid") c = presets::helicoid(p("a"), p("vmax"));
        else c = chart_from_csv(path, periodic_u, periodic_v, "csv");
        c.mode = derivatives == "fd" ? DerivativeMode::FiniteDifference : DerivativeMode::Analytic;
        c.h_geom = h_geom;
        return std::make_shared<SurfaceChart>(std::move(c));
    }
};

struct FieldSpec {
    std::string preset = "zero";
    std::map<std::string, double> scalars;
    std::map<std::string, std::vector<double>> vectors;
    std::vector<std::pair<std::string, std::string>> files;  // (csv, sidecar) for "sources"

    struct Shape {
        std::map<std::string, double> scalars;
        std::map<std::string, std::vector<double>> vectors;
    };
    static const std::map<std::string, Shape>& shapes() {
        static const std::map<std::string, Shape> s = {
            {"zero", {}},
            {"uniform", {{}, {{"a", {0, 0, 1}}}}},
            {"linear_z", {{{"a", 1.0}}, {}}},
            {"wire", {{{"current", 1.0}}, {{"point", {0, 0, 0}}, {"direction", {0, 0, 1}}}}},
            {"azimuthal", {{{"s", 1.0}, {"rho0", 1.0}}, {{"point", {0, 0, 0}}, {"direction", {0, 0, 1}}}}},
            {"loop",
             {{{"radius", 0.5}, {"current", 1.0}, {"segments", 128}, {"quadrature_n", 8}},
              {{"center", {0, 0, 0}}, {"normal", {0, 0, 1}}}}},
            {"solenoid",
             {{{"radius", 0.5}, {"length", 1.0}, {"n_turns", 8}, {"current", 1.0}, {"segments", 64},
               {"quadrature_n", 8}},
              {{"center", {0, 0, 0}}, {"axis", {0, 0, 1}}}}},
            {"sources", {{{"quadrature_n", 8}}, {}}},
        };
        return s;
    }

    static FieldSpec from_json(const nlohmann::json& j) {
        FieldSpec f;
        if (!j.is_object() || !j.contains("preset")) throw Error(ErrorKind::Config, "field needs a 'preset'");
        f.preset = j.at("preset").get<std::string>();
        const auto it = shapes().find(f.preset);
        if (it == shapes().end()) throw Error(ErrorKind::Config, "unknown field preset '" + f.preset + "'");
        std::set<std::string> allowed = {"preset"};
        for (const auto& [k, _] : it->second.scalars) allowed.insert(k);
        for (const auto& [k, _] : it->second.vectors) allowed.insert(k);
        if (f.preset == "sources") allowed.insert("files");
        detail::check_keys(j, allowed, "field");
        for (const auto& [k, v] : it->second.scalars) f.scalars[k] = detail::get_or(j, k, v);
        for (const auto& [k, v] : it->second.vectors) {
            f.vectors[k] = detail::get_or(j, k, v);
            if (f.vectors[k].size() != 3) throw Error(ErrorKind::Config, "field." + k + " needs 3 components");
        }
        if (f.preset == "sources") {
            for (const auto& e : j.at("files")) {
                detail::check_keys(e, {"csv", "sidecar"}, "field.files[]");
                f.files.emplace_back(e.at("csv").get<std::string>(), e.at("sidecar").get<std::string>());
            }
            if (f.files.empty()) throw Error(ErrorKind::Config, "field.files is empty");
        }
        return f;
    }
    nlohmann::json to_json() const {
        nlohmann::json j = {{"preset", preset}};
        for (const auto& [k, v] : scalars) j[k] = v;
        for (const auto& [k, v] : vectors) j[k] = v;
        if (preset == "sources") {
            j["files"] = nlohmann::json::array();
            for (const auto& [c, s] : files) j["files"].push_back({{"csv", c}, {"sidecar", s}});
        }
        return j;
    }
    bool operator==(const FieldSpec&) const = default;

    VectorPotentialField build() const {
        auto S = [&](const char* k) { return scalars.at(k); };
        auto V = [&](const char* k) {
            const auto& v = vectors.at(k);
            return Vec3(v[0], v[1], v[2]);
        };
        auto I = [&](const char* k) { return static_cast<int>(std::lround(scalars.at(k))); };
        VectorPotentialField f;
        if (preset == "zero") f = fields::zero();
        else if (preset == "uniform") f = fields::uniform(V("a"));
        else if (preset == "linear_z") f = fields::linear_z(S("a"));
        else if (preset == "wire") f = fields::wire(V("point"), V("direction"), S("current"));
        else if (preset == "azimuthal") f = fields::azimuthal(S("s"), S("rho0"), V("point"), V("direction"));
        else if (preset == "loop") {
            f = fields::loop(V("center"), S("radius"), V("normal"), S("current"), I("segments"), I("quadrature_n"));
        } else if (preset == "solenoid") {
            f = fields::solenoid(V("center"), V("axis"), S("radius"), S("length"), I("n_turns"), S("current"),
                                 I("segments"), I("quadrature_n"));
        } else {
            std::vector<CurrentSource> src;
            for (const auto& [c, s] : files) src.push_back(read_current_source(c, s));
            f = biot_savart_potential(src, I("quadrature_n"));
        }
        f.label = to_json().dump();
        return f;
    }
};

struct Scenario {
    std::string name = "unnamed";
    SurfaceSpec surface;
    FieldSpec field;
    ParticleParams particle;
    int n_u = 32, n_v = 32;
    std::string rule_u, rule_v;  // empty: chart default
    int n3 = 8;
    double eps = 0.05;
    std::string variant = "variational";
    AssemblyOptions assembly;
    BoundaryCondition bc;
    Confinement confinement;
    SolverConfig solver;
    // analysis
    int n_states = 3;
    int schmidt_values = 4;
    bool baseline = true;
    double xi_u = std::nan(""), xi_v = std::nan("");
    double xi_h3 = 1e-2;
    double xi_width = 0.3;
    double xi_center = 0.05;
    int xi_levels = 3;
    bool dump_eigenvectors = false;
    std::string output = "out";

    static Scenario from_json(const nlohmann::json& j) {
        using detail::check_keys;
        using detail::get_or;
        check_keys(j, {"name", "surface", "field", "particle", "grid", "variant", "assembly", "boundary",
                       "confinement", "solver", "analysis", "output"},
                   "scenario");
        Scenario s;
        s.name = get_or<std::string>(j, "name", "unnamed");
        if (!j.contains("surface")) throw Error(ErrorKind::Config, "scenario needs a 'surface'");
        s.surface = SurfaceSpec::from_json(j.at("surface"));
        s.field = FieldSpec::from_json(j.value("field", nlohmann::json{{"preset", "zero"}}));

        const auto p = j.value("particle", nlohmann::json::object());
        check_keys(p, {"mass", "charge"}, "particle");
        s.particle.mass = get_or(p, "mass", 1.0);
        s.particle.charge = get_or(p, "charge", 0.0);

        const auto g = j.value("grid", nlohmann::json::object());
        check_keys(g, {"n_u", "n_v", "rule_u", "rule_v", "n3", "eps"}, "grid");
        s.n_u = get_or(g, "n_u", 32);
        s.n_v = get_or(g, "n_v", 32);
        s.rule_u = get_or<std::string>(g, "rule_u", "");
        s.rule_v = get_or<std::string>(g, "rule_v", "");
        for (const auto& r : {s.rule_u, s.rule_v})
            if (!r.empty()) detail::edge_rule_of(r);
        s.n3 = get_or(g, "n3", 8);
        s.eps = get_or(g, "eps", 0.05);

        s.variant = get_or<std::string>(j, "variant", "variational");
        if (s.variant != "laplace_beltrami" && s.variant != "naive" && s.variant != "variational" &&
            s.variant != "slab3d") {
            throw Error(ErrorKind::Config, "unknown variant '" + s.variant + "'");
        }

        const auto a = j.value("assembly", nlohmann::json::object());
        check_keys(a, {"geometric_potential", "coef_adv"}, "assembly");
        s.assembly.geometric_potential = get_or(a, "geometric_potential", true);
        s.assembly.coef_adv = get_or(a, "coef_adv", 1.0);

        const auto b = j.value("boundary", nlohmann::json::object());
        check_keys(b, {"kind", "c_A", "c_M"}, "boundary");
        const auto kind = get_or<std::string>(b, "kind", "dirichlet");
        if (kind == "dirichlet") s.bc = BoundaryCondition::dirichlet();
        else if (kind == "neumann") s.bc = BoundaryCondition::neumann(get_or(b, "c_A", 2.0), get_or(b, "c_M", 2.0));
        else throw Error(ErrorKind::Config, "boundary.kind must be 'dirichlet' or 'neumann'");
        if (kind == "dirichlet" && (b.contains("c_A") || b.contains("c_M"))) {
            s.bc.c_A = get_or(b, "c_A", 2.0);
            s.bc.c_M = get_or(b, "c_M", 2.0);
        }

        const auto c = j.value("confinement", nlohmann::json::object());
        check_keys(c, {"kind", "omega"}, "confinement");
        const auto ck = get_or<std::string>(c, "kind", "none");
        if (ck == "none") s.confinement = Confinement::none();
        else if (ck == "harmonic") s.confinement = Confinement::harmonic(get_or(c, "omega", 1.0));
        else throw Error(ErrorKind::Config, "confinement.kind must be 'none' or 'harmonic'");

        const auto sv = j.value("solver", nlohmann::json::object());
        check_keys(sv, {"k", "shift", "tol", "max_iter", "restart", "seed", "dense_threshold", "force_krylov",
                        "cluster_tol"},
                   "solver");
        s.solver.k = get_or(sv, "k", 6);
        if (sv.contains("shift") && !sv.at("shift").is_null()) {
            const auto sh = sv.at("shift").get<std::vector<double>>();
            if (sh.size() != 2) throw Error(ErrorKind::Config, "solver.shift must be [re, im] or null");
            s.solver.shift = cplx(sh[0], sh[1]);
        }
        s.solver.tol = get_or(sv, "tol", 1e-8);
        s.solver.max_iter = get_or(sv, "max_iter", 300);
        s.solver.restart = get_or(sv, "restart", 0);
        s.solver.seed = get_or<std::uint64_t>(sv, "seed", 12345);
        s.solver.dense_threshold = get_or(sv, "dense_threshold", 600);
        s.solver.force_krylov = get_or(sv, "force_krylov", false);
        s.solver.cluster_tol = get_or(sv, "cluster_tol", 1e-6);

        const auto an = j.value("analysis", nlohmann::json::object());
        check_keys(an, {"n_states", "schmidt_values", "baseline", "xi_u", "xi_v", "xi_h3", "xi_width", "xi_center",
                        "xi_levels", "dump_eigenvectors"},
                   "analysis");
        s.n_states = get_or(an, "n_states", 3);
        s.schmidt_values = get_or(an, "schmidt_values", 4);
        s.baseline = get_or(an, "baseline", true);
        if (an.contains("xi_u") && !an.at("xi_u").is_null()) s.xi_u = an.at("xi_u").get<double>();
        if (an.contains("xi_v") && !an.at("xi_v").is_null()) s.xi_v = an.at("xi_v").get<double>();
        s.xi_h3 = get_or(an, "xi_h3", 1e-2);
        s.xi_width = get_or(an, "xi_width", 0.3);
        s.xi_center = get_or(an, "xi_center", 0.05);
        s.xi_levels = get_or(an, "xi_levels", 3);
        s.dump_eigenvectors = get_or(an, "dump_eigenvectors", false);
        s.output = get_or<std::string>(j, "output", "out");
        s.validate();
        return s;
    }

    nlohmann::json to_json() const {
        nlohmann::json shift = nullptr;
        if (solver.shift) shift = {solver.shift->real(), solver.shift->imag()};
        nlohmann::json grid = {{"n_u", n_u}, {"n_v", n_v}, {"n3", n3}, {"eps", eps}};
        if (!rule_u.empty()) grid["rule_u"] = rule_u;
        if (!rule_v.empty()) grid["rule_v"] = rule_v;
        auto opt = [](double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); };
        return {
            {"name", name},
            {"surface", surface.to_json()},
            {"field", field.to_json()},
            {"particle", {{"mass", particle.mass}, {"charge", particle.charge}}},
            {"grid", grid},
            {"variant", variant},
            {"assembly", {{"geometric_potential", assembly.geometric_potential}, {"coef_adv", assembly.coef_adv}}},
            {"boundary",
             {{"kind", bc.kind == BoundaryCondition::Kind::Dirichlet ? "dirichlet" : "neumann"},
              {"c_A", bc.c_A},
              {"c_M", bc.c_M}}},
            {"confinement",
             {{"kind", confinement.kind == Confinement::Kind::None ? "none" : "harmonic"},
              {"omega", confinement.omega}}},
            {"solver",
             {{"k", solver.k},
              {"shift", shift},
              {"tol", solver.tol},
              {"max_iter", solver.max_iter},
              {"restart", solver.restart},
              {"seed", solver.seed},
              {"dense_threshold", solver.dense_threshold},
              {"force_krylov", solver.force_krylov},
              {"cluster_tol", solver.cluster_tol}}},
            {"analysis",
             {{"n_states", n_states},
              {"schmidt_values", schmidt_values},
              {"baseline", baseline},
              {"xi_u", opt(xi_u)},
              {"xi_v", opt(xi_v)},
              {"xi_h3", xi_h3},
              {"xi_width", xi_width},
              {"xi_center", xi_center},
              {"xi_levels", xi_levels},
              {"dump_eigenvectors", dump_eigenvectors}}},
            {"output", output},
        };
    }

    void validate() const {
        particle.validate();
        bc.validate();
        if (n3 < 1 || !(eps > 0)) throw Error(ErrorKind::Config, "grid.n3 and grid.eps must be positive");
        if (n_states < 1 || schmidt_values < 1) throw Error(ErrorKind::Config, "analysis counts must be >= 1");
        if (!(xi_h3 > 0) || !(xi_width > 0) || xi_levels < 2) {
            throw Error(ErrorKind::Config, "xi check needs xi_h3 > 0, xi_width > 0, xi_levels >= 2");
        }
        if (confinement.kind == Confinement::Kind::Harmonic && !(confinement.omega > 0)) {
            throw Error(ErrorKind::Config, "confinement.omega must be positive");
        }
        if (surface.preset == "csv" && !std::filesystem::exists(surface.path)) {
            throw Error(ErrorKind::Config, "surface file '" + surface.path + "' does not exist");
        }
        for (const auto& [c, s] : field.files) {
            if (!std::filesystem::exists(c) || !std::filesystem::exists(s)) {
                throw Error(ErrorKind::Config, "field source file '" + c + "' or '" + s + "' does not exist");
            }
        }
    }

    bool operator==(const Scenario& o) const { return to_json() == o.to_json(); }

    SurfaceGrid build_grid(int refine = 1) const {
        auto rule = [](const std::string& r) -> std::optional<EdgeRule> {
            if (r.empty()) return std::nullopt;
            return detail::edge_rule_of(r);
        };
        return SurfaceGrid::build(surface.build(), n_u * refine, n_v * refine, rule(rule_u), rule(rule_v),
                                  particle.mass);
    }
    SlabGrid build_slab(const BoundaryCondition& b) const {
        return SlabGrid::build(build_grid(), n3, eps,
                               b.kind == BoundaryCondition::Kind::Dirichlet ? TransverseRule::Dirichlet
                                                                            : TransverseRule::Neumann);
    }
};

/// Loads a scenario file or a manifest written by a previous run.
inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Config, "cannot parse '" + path + "': " + e.what());
    }
    if (j.contains("tool") && j.contains("scenario")) return Scenario::from_json(j.at("scenario"));
    return Scenario::from_json(j);
}

// ---------------------------------------------------------------------------
// Acceptance presets.

namespace detail {

inline nlohmann::json preset_body(const std::string& name) {
    using J = nlohmann::json;
    if (name == "AC1") {
        return J{{"name", "AC1"}, {"surface", {{"preset", "sphere"}, {"R", 1.0}}}, {"grid", {{"n_u", 64}, {"n_v", 64}}}};
    }
    if (name == "AC2") {
        return J{{"name", "AC2"},
                 {"surface", {{"preset", "torus"}, {"R", 2.0}, {"r", 1.0}}},
                 {"grid", {{"n_u", 64}, {"n_v", 64}}}};
    }
    if (name == "AC3") {
        return J{{"name", "AC3"},
                 {"surface", {{"preset", "torus"}, {"R", 2.0}, {"r", 1.0}}},
                 {"field",
                  {{"preset", "loop"},
                   {"center", {0.5, 0.0, 3.0}},
                   {"normal", {1.0, 0.0, 1.0}},
                   {"radius", 0.5},
                   {"current", 1.0}}},
                 {"grid", {{"n_u", 64}, {"n_v", 64}}}};
    }
    if (name == "AC4") {
        return J{{"name", "AC4"},
                 {"surface", {{"preset", "sphere"}, {"R", 1.0}}},
                 {"field", {{"preset", "uniform"}, {"a", {0.0, 0.0, 1.0}}}},
                 {"particle", {{"mass", 1.0}, {"charge", 1.0}}},
                 {"grid", {{"n_u", 16}, {"n_v", 32}}},
                 {"solver", {{"k", 6}, {"shift", {0.0, 0.0}}}}};
    }
    if (name == "AC5") {
        return J{{"name", "AC5"},
                 {"surface", {{"preset", "sphere"}, {"R", 1.0}}},
                 {"field", {{"preset", "uniform"}, {"a", {0.0, 0.0, 1.0}}}},
                 {"particle", {{"mass", 1.0}, {"charge", 1.0}}},
                 {"grid", {{"n_u", 16}, {"n_v", 32}}},
                 {"solver", {{"k", 8}, {"shift", {0.0, 0.0}}}}};
    }
    if (name == "AC6") {
        return J{{"name", "AC6"},
                 {"surface", {{"preset", "sphere"}, {"R", 1.0}}},
                 {"grid", {{"n_u", 24}, {"n_v", 48}, {"n3", 8}, {"eps", 0.05}}},
                 {"variant", "slab3d"},
                 {"boundary", {{"kind", "dirichlet"}}},
                 {"solver", {{"k", 9}}}};
    }
    if (name == "AC7") {
        return J{{"name", "AC7"},
                 {"surface", {{"preset", "torus"}, {"R", 2.0}, {"r", 1.0}}},
                 {"grid", {{"n_u", 24}, {"n_v", 16}, {"n3", 8}, {"eps", 0.05}}},
                 {"variant", "slab3d"},
                 {"boundary", {{"kind", "neumann"}, {"c_A", 2.0}, {"c_M", 2.0}}},
                 {"solver", {{"k", 3}}},
                 {"analysis", {{"n_states", 3}}}};
    }
    if (name == "AC8") {
        return J{{"name", "AC8"},
                 {"surface", {{"preset", "sphere"}, {"R", 1.0}}},
                 {"grid", {{"n_u", 64}, {"n_v", 128}}},
                 {"variant", "laplace_beltrami"},
                 {"solver", {{"k", 9}, {"shift", {-0.1, 0.0}}, {"cluster_tol", 1e-2}}}};
    }
    throw Error(ErrorKind::Config, "unknown preset '" + name + "' (AC1..AC8)");
}

}  // namespace detail

inline nlohmann::json preset_json(const std::string& name) {
    auto j = detail::preset_body(name);
    j["output"] = "out/" + name;
    return j;
}

inline std::vector<std::string> preset_names() { return {"AC1", "AC2", "AC3", "AC4", "AC5", "AC6", "AC7", "AC8"}; }

inline Scenario preset(const std::string& name) { return Scenario::from_json(preset_json(name)); }

// ---------------------------------------------------------------------------
// Pipelines.

struct RunOutcome {
    int exit_code = 0;
    std::vector<std::string> files;
    nlohmann::json summary;
};

struct RunContext {
    std::filesystem::path out;
    int threads = 1;
    std::string command;
};

namespace detail {

inline void write_manifest(const RunContext& ctx, const Scenario& scn, const nlohmann::json& hashes,
                           RunOutcome& outcome) {
    nlohmann::json m = {{"tool", "thinwall"},
                        {"version", kVersion},
                        {"command", ctx.command},
                        {"units", kUnits},
                        {"threads", ctx.threads},
                        {"scenario", scn.to_json()},
                        {"grid_hashes", hashes},
                        {"outputs", outcome.files},
                        {"exit_code", outcome.exit_code}};
    io::atomic_write(ctx.out / "manifest.json", m.dump(2) + "\n");
    outcome.files.push_back("manifest.json");
}

inline void emit(const RunContext& ctx, RunOutcome& o, const std::string& name, const std::string& content) {
    io::atomic_write(ctx.out / name, content);
    o.files.push_back(name);
}

inline DiscreteOperator assemble_surface(const Scenario& scn, const SurfaceGrid& g, const std::string& variant,
                                         const VectorPotentialField& f) {
    if (variant == "laplace_beltrami") {
        auto op = assemble_laplace_beltrami(g, scn.particle.mass);
        op.meta.charge = scn.particle.charge;
        return op;
    }
    if (variant == "naive") return assemble_naive_hamiltonian(g, f, scn.particle, scn.assembly);
    if (variant == "variational") return assemble_variational_hamiltonian(g, f, scn.particle, scn.assembly);
    throw Error(ErrorKind::Config, "variant '" + variant + "' is not a surface variant");
}

inline std::string hex(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace detail

inline RunOutcome run_geometry(const Scenario& scn, const RunContext& ctx) {
    const SurfaceGrid g = scn.build_grid();
    RunOutcome o;
    std::ostringstream csv;
    csv << "u,v,M,K_gauss,V0,det_g\n";
    struct Stat {
        double lo = std::numeric_limits<double>::infinity(), hi = -std::numeric_limits<double>::infinity(), sum = 0;
        void add(double x) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
            sum += x;
        }
    };
    std::map<std::string, Stat> st;
    for (const auto& s : g.nodes()) {
        csv << io::fmt(s.u) << "," << io::fmt(s.v) << "," << io::fmt(s.M) << "," << io::fmt(s.K_gauss) << ","
            << io::fmt(s.V0) << "," << io::fmt(s.det_g) << "\n";
        st["M"].add(s.M);
        st["K_gauss"].add(s.K_gauss);
        st["V0"].add(s.V0);
        st["det_g"].add(s.det_g);
    }
    detail::emit(ctx, o, "geometry.csv", csv.str());
    nlohmann::json sum = {{"nodes", g.size()}, {"chart", g.chart().name}};
    for (const auto& [k, s] : st) sum[k] = {{"min", s.lo}, {"max", s.hi}, {"mean", s.sum / g.size()}};
    o.summary = sum;
    detail::emit(ctx, o, "geometry_summary.json", sum.dump(2) + "\n");
    detail::write_manifest(ctx, scn, {{"surface", detail::hex(g.hash())}}, o);
    return o;
}

inline RunOutcome run_spectrum(const Scenario& scn, const RunContext& ctx) {
    RunOutcome o;
    const auto field = scn.field.build();
    DiscreteOperator op;
    nlohmann::json hashes;
    if (scn.variant == "slab3d") {
        const SlabGrid slab = scn.build_slab(scn.bc);
        op = assemble_slab_hamiltonian(slab, field, scn.particle, scn.bc, scn.confinement);
        hashes = {{"surface", detail::hex(slab.surface().hash())}, {"slab", detail::hex(slab.hash())}};
    } else {
        const SurfaceGrid g = scn.build_grid();
        op = detail::assemble_surface(scn, g, scn.variant, field);
        hashes = {{"surface", detail::hex(g.hash())}};
    }
    const SpectrumResult r = solve_lowest(op, scn.solver);
    o.exit_code = r.all_converged ? 0 : 3;
    o.summary = io::spectrum_json(r);
    detail::emit(ctx, o, "spectrum.csv", io::spectrum_csv(r));
    detail::emit(ctx, o, "spectrum.json", o.summary.dump(2) + "\n");
    if (scn.dump_eigenvectors) detail::emit(ctx, o, "eigenvectors.csv", io::eigenvectors_csv(r));
    detail::write_manifest(ctx, scn, hashes, o);
    return o;
}

inline RunOutcome run_compare(const Scenario& scn, const RunContext& ctx) {
    if (scn.variant == "slab3d") throw Error(ErrorKind::Config, "compare runs on surface grids; variant is slab3d");
    RunOutcome o;
    const auto field = scn.field.build();
    const SurfaceGrid g = scn.build_grid();
    const auto naive = assemble_naive_hamiltonian(g, field, scn.particle, scn.assembly);
    const auto var = assemble_variational_hamiltonian(g, field, scn.particle, scn.assembly);
    const auto rn = solve_lowest(naive, scn.solver);
    const auto rv = solve_lowest(var, scn.solver);
    std::optional<DiscreteOperator> delta;
    if (scn.assembly.coef_adv == 1.0) delta = anomalous_delta(naive, var);
    const auto rep = compare_variants(rn, rv, delta ? &*delta : nullptr);
    o.exit_code = rn.all_converged && rv.all_converged ? 0 : 3;
    o.summary = rep.to_json();
    o.summary["converged"] = {{"naive", rn.all_converged}, {"variational", rv.all_converged}};
    detail::emit(ctx, o, "compare.json", o.summary.dump(2) + "\n");
    detail::emit(ctx, o, "compare.txt", rep.to_text());
    detail::write_manifest(ctx, scn, {{"surface", detail::hex(g.hash())}}, o);
    return o;
}

inline RunOutcome run_separability(const Scenario& scn, const RunContext& ctx) {
    RunOutcome o;
    const auto field = scn.field.build();
    SolverConfig cfg = scn.solver;
    cfg.k = std::max(cfg.k, scn.n_states);
    std::vector<std::pair<std::string, SchmidtReport>> rows;
    nlohmann::json hashes;
    auto run = [&](const BoundaryCondition& bc, const std::string& tag, double& worst) {
        const SlabGrid slab = scn.build_slab(bc);
        const auto op = assemble_slab_hamiltonian(slab, field, scn.particle, bc, scn.confinement);
        const auto r = solve_lowest(op, cfg);
        if (!r.all_converged) o.exit_code = 3;
        hashes[tag] = detail::hex(slab.hash());
        worst = 0;
        for (int i = 0; i < scn.n_states; ++i) {
            auto rep = schmidt_spectrum(r.eigenvectors.col(i), slab, scn.schmidt_values);
            worst = std::max(worst, rep.separability_index);
            rows.emplace_back(tag + ":" + std::to_string(i), rep);
        }
        return r;
    };
    double worst = 0, base = 0;
    const auto r = run(scn.bc, scn.bc.kind == BoundaryCondition::Kind::Dirichlet ? "dirichlet" : "neumann", worst);
    nlohmann::json sum = {{"boundary", scn.bc.label()},
                          {"max_index", worst},
                          {"eigenvalues", io::spectrum_json(r)["eigenvalues"]},
                          {"separable_floor", 1e-8}};
    if (scn.bc.kind == BoundaryCondition::Kind::NeumannConstraint && scn.baseline) {
        run(BoundaryCondition::dirichlet(), "baseline", base);
        sum["baseline_max_index"] = base;
        sum["ratio_to_baseline"] = worst / std::max(base, 1e-8);
    }
    nlohmann::json states = nlohmann::json::array();
    for (const auto& [label, rep] : rows) {
        auto js = rep.to_json();
        js["state"] = label;
        states.push_back(js);
    }
    sum["states"] = states;
    o.summary = sum;
    detail::emit(ctx, o, "schmidt.csv", io::schmidt_csv(rows));
    detail::emit(ctx, o, "separability.json", sum.dump(2) + "\n");
    detail::write_manifest(ctx, scn, hashes, o);
    return o;
}

struct GaugeLevel {
    int n_u = 0, n_v = 0;
    double max_identity_error = 0;  // max |identity - div3|
    double max_lorentz = 0;         // max |identity|
};

inline GaugeLevel gauge_level(const Scenario& scn, const VectorPotentialField& f, int refine,
                              std::ostringstream* csv = nullptr) {
    const SurfaceGrid g = scn.build_grid(refine);
    const auto samples = sample_field(g, f);
    const RVec div = surface_divergence_on_grid(g, samples);
    GaugeLevel lv{g.n_u(), g.n_v(), 0, 0};
    if (csv) *csv << "u,v,identity,div3,error\n";
    for (int p = 0; p < g.size(); ++p) {
        const double id = surface_divergence_identity(samples[p], g.node(p), div[p]);
        lv.max_identity_error = std::max(lv.max_identity_error, std::abs(id - samples[p].div3));
        lv.max_lorentz = std::max(lv.max_lorentz, std::abs(id));
        if (csv) {
            *csv << io::fmt(g.node(p).u) << "," << io::fmt(g.node(p).v) << "," << io::fmt(id) << ","
                 << io::fmt(samples[p].div3) << "," << io::fmt(id - samples[p].div3) << "\n";
        }
    }
    return lv;
}

inline RunOutcome run_gauge_check(const Scenario& scn, const RunContext& ctx) {
    RunOutcome o;
    const auto field = scn.field.build();
    std::ostringstream csv;
    const GaugeLevel l1 = gauge_level(scn, field, 1, &csv);
    const GaugeLevel l2 = gauge_level(scn, field, 2);
    const double order = (l1.max_identity_error > 0 && l2.max_identity_error > 0)
                             ? std::log2(l1.max_identity_error / l2.max_identity_error)
                             : std::numeric_limits<double>::infinity();
    // Gauge invariance of B under f = x y.
    const auto gf = make_gauge_fd([](const Vec3& x) { return x.x() * x.y(); });
    const auto shifted = gauge_transform(field, gf);
    const SurfaceGrid g = scn.build_grid();
    double curl_diff = 0;
    for (const auto& s : g.nodes()) {
        curl_diff = std::max(curl_diff, (ambient_curl(shifted, s.position) - ambient_curl(field, s.position)).norm());
    }
    o.summary = {{"levels",
                  {{{"n_u", l1.n_u}, {"n_v", l1.n_v}, {"max_identity_error", l1.max_identity_error},
                    {"max_lorentz_residual", l1.max_lorentz}},
                   {{"n_u", l2.n_u}, {"n_v", l2.n_v}, {"max_identity_error", l2.max_identity_error},
                    {"max_lorentz_residual", l2.max_lorentz}}}},
                 {"observed_order", std::isfinite(order) ? nlohmann::json(order) : nlohmann::json(nullptr)},
                 {"gauge_curl_difference", curl_diff}};
    detail::emit(ctx, o, "gauge_check.csv", csv.str());
    detail::emit(ctx, o, "gauge_check.json", o.summary.dump(2) + "\n");
    detail::write_manifest(ctx, scn, {{"surface", detail::hex(g.hash())}}, o);
    return o;
}

inline RunOutcome run_xi_check(const Scenario& scn, const RunContext& ctx) {
    RunOutcome o;
    const auto chart = scn.surface.build();
    const auto& d = chart->domain;
    const double u = std::isnan(scn.xi_u) ? 0.5 * (d.u0 + d.u1) : scn.xi_u;
    const double v = std::isnan(scn.xi_v) ? 0.5 * (d.v0 + d.v1) : scn.xi_v;
    const auto sample = sample_geometry(*chart, u, v, scn.particle.mass);
    const double w = scn.xi_width, c = scn.xi_center;
    auto profile = [w, c](double x) { return std::exp(-(x - c) * (x - c) / (2 * w * w)); };
    nlohmann::json rows = nlohmann::json::array();
    double prev = 0, h = scn.xi_h3;
    for (int i = 0; i < scn.xi_levels; ++i, h *= 0.5) {
        const double dft = xi_reduction_check(sample, profile, h, scn.particle.mass);
        nlohmann::json r = {{"h3", h}, {"defect", dft}};
        if (i > 0) r["ratio"] = dft > 0 ? nlohmann::json(prev / dft) : nlohmann::json(nullptr);
        rows.push_back(r);
        prev = dft;
    }
    o.summary = {{"u", u}, {"v", v}, {"M", sample.M}, {"K_gauss", sample.K_gauss}, {"V0", sample.V0}, {"levels", rows}};
    detail::emit(ctx, o, "xi_check.json", o.summary.dump(2) + "\n");
    detail::write_manifest(ctx, scn, nlohmann::json::object(), o);
    return o;
}

}  // namespace thinwall
