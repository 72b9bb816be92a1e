// Coarse dense oracle for the separability fixture: Schmidt indices of the three lowest
// slab states (12x8 surface nodes, n3 = 6, eps = 0.05, q = 0) under Dirichlet and
// Neumann(2,2) transverse conditions. Writes JSON to stdout.

#include "thinwall/scenario.hpp"

#include <iostream>

using namespace thinwall;

int main() {
    const std::vector<std::pair<std::string, nlohmann::json>> surfaces = {
        {"cylinder", {{"preset", "cylinder"}, {"R", 1.0}, {"L", 1.0}}},
        {"sphere", {{"preset", "sphere"}, {"R", 1.0}}},
        {"catenoid", {{"preset", "catenoid"}, {"a", 1.0}, {"vmax", 1.0}}},
        {"torus", {{"preset", "torus"}, {"R", 2.0}, {"r", 1.0}}},
    };
    nlohmann::json out = {{"grid", {{"n_u", 12}, {"n_v", 8}, {"n3", 6}, {"eps", 0.05}}},
                          {"n_states", 3},
                          {"solver", "dense"},
                          {"floor", 1e-8},
                          {"constant_M_max_ratio", 10.0},
                          {"torus_min_ratio", 100.0}};
    for (const auto& [name, surf] : surfaces) {
        nlohmann::json row;
        for (const auto& bc : {BoundaryCondition::dirichlet(), BoundaryCondition::neumann(2.0, 2.0)}) {
            Scenario scn = Scenario::from_json({{"surface", surf}, {"grid", {{"n_u", 12}, {"n_v", 8}, {"n3", 6}}}});
            const SlabGrid slab = scn.build_slab(bc);
            const auto op = assemble_slab_hamiltonian(slab, fields::zero(), scn.particle, bc, scn.confinement);
            SolverConfig cfg;
            cfg.k = 3;
            const auto r = solve_lowest(op, cfg);
            r.require_converged();
            double worst = 0;
            for (int i = 0; i < 3; ++i) {
                worst = std::max(worst, schmidt_spectrum(r.eigenvectors.col(i), slab, 2).separability_index);
            }
            row[bc.kind == BoundaryCondition::Kind::Dirichlet ? "dirichlet" : "neumann"] = worst;
        }
        row["ratio"] = row["neumann"].get<double>() / std::max(row["dirichlet"].get<double>(), 1e-8);
        out["surfaces"][name] = row;
    }
    std::cout << out.dump(2) << "\n";
}
