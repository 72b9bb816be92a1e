#include "thinwall/solver.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace thinwall;

namespace {

std::shared_ptr<SurfaceChart> chart(SurfaceChart c) { return std::make_shared<SurfaceChart>(std::move(c)); }

SurfaceGrid ring_grid(int n) { return SurfaceGrid::build(chart(presets::cylinder(1.0, 0.5)), n, 4, {}, {}, 1.0); }

SurfaceGrid sphere_grid(int nu, int nv) { return SurfaceGrid::build(chart(presets::sphere(1.0)), nu, nv); }

// Plane sheared by (u, v) -> (u + 0.4 v, v): a non-orthogonal chart of a flat surface.
SurfaceChart sheared_plane() {
    SurfaceChart c;
    c.name = "sheared";
    c.domain = {0, 2 * kPi, 0, 2 * kPi};
    c.periodic_u = c.periodic_v = false;
    c.map = [](double u, double v) { return Vec3(u + 0.4 * v, v, 0); };
    return c;
}

double max_abs(const SpMat& m) {
    double x = 0;
    for (int k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it) x = std::max(x, std::abs(it.value()));
    return x;
}

SolverConfig cfg_k(int k, std::optional<cplx> shift = std::nullopt) {
    SolverConfig c;
    c.k = k;
    c.shift = shift;
    return c;
}

}  // namespace

TEST(LaplaceBeltrami, AnnihilatesConstantsAndIsSelfAdjoint) {
    const auto g = SurfaceGrid::build(chart(presets::torus(2, 1)), 24, 16);
    const auto op = assemble_laplace_beltrami(g, 1.0);
    const CVec one = CVec::Ones(op.dimension());
    EXPECT_LE((op.H * one).cwiseAbs().maxCoeff(), 1e-10 * op.max_abs());
    EXPECT_LE(hermiticity_residual(op), 1e-12 * op.max_abs());
    EXPECT_LE(op.max_row_nnz(), 5);
    EXPECT_EQ(op.meta.variant, "laplace_beltrami");
}

TEST(LaplaceBeltrami, NonOrthogonalChartStencil) {
    const auto g = SurfaceGrid::build(chart(sheared_plane()), 12, 12, EdgeRule::Dirichlet, EdgeRule::Dirichlet);
    const auto op = assemble_laplace_beltrami(g, 1.0);
    EXPECT_LE(op.max_row_nnz(), 9);
    EXPECT_GT(op.max_row_nnz(), 5);
    EXPECT_LE(hermiticity_residual(op), 1e-12 * op.max_abs());
}

TEST(LaplaceBeltrami, DirichletBoxGroundState) {
    const auto g = SurfaceGrid::build(chart(presets::plane(kPi, kPi)), 40, 40, EdgeRule::Dirichlet,
                                      EdgeRule::Dirichlet);
    const auto r = solve_lowest(assemble_laplace_beltrami(g, 1.0), cfg_k(3));
    ASSERT_TRUE(r.all_converged);
    EXPECT_NEAR(r.eigenvalues[0].real(), 1.0, 1e-3);
    EXPECT_NEAR(r.eigenvalues[1].real(), 2.5, 5e-3);
    EXPECT_NEAR(r.eigenvalues[2].real(), 2.5, 5e-3);
}

TEST(LaplaceBeltrami, RingSpectrum) {
    const auto r = solve_lowest(assemble_laplace_beltrami(ring_grid(256), 1.0), cfg_k(5, cplx(-0.1, 0)));
    ASSERT_TRUE(r.all_converged);
    const double expect[] = {0, 0.5, 0.5, 2, 2};
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(r.eigenvalues[i].real(), expect[i], 1e-3);
    ASSERT_EQ(r.clusters.size(), 3u);
    EXPECT_EQ(r.clusters[1].size(), 2u);
}

TEST(ReducedOperators, ChargeZeroCoincidesWithLaplaceBeltramiPlusV0) {
    const auto g = SurfaceGrid::build(chart(presets::torus(2, 1)), 16, 12, {}, {}, 1.5);
    const auto f = fields::uniform(Vec3(0.2, 0.1, 1.0));
    const ParticleParams neutral{1.5, 0.0};
    const auto n = assemble_naive_hamiltonian(g, f, neutral);
    const auto v = assemble_variational_hamiltonian(g, f, neutral);
    EXPECT_EQ(max_abs(n.H - v.H), 0.0);
    const auto lb = assemble_laplace_beltrami(g, 1.5);
    const SpMat d = n.H - lb.H;
    for (int k = 0; k < d.outerSize(); ++k) {
        for (SpMat::InnerIterator it(d, k); it; ++it) {
            if (it.row() == it.col()) {
                EXPECT_NEAR(std::abs(it.value() - g.node(it.row()).V0), 0.0, 1e-12);
            } else {
                EXPECT_NEAR(std::abs(it.value()), 0.0, 1e-12);
            }
        }
    }
    EXPECT_EQ(anomalous_delta(n, v).H.nonZeros(), 0);
    EXPECT_EQ(n.meta.dropped_terms, std::vector<std::string>{"A3*d3"});
}

TEST(ReducedOperators, AnomalousDiagonalOnSphere) {
    const auto g = sphere_grid(16, 32);
    const double a = 0.7;
    const ParticleParams pp{1.0, 1.0};
    const auto f = fields::uniform(Vec3(0, 0, a));
    const auto n = assemble_naive_hamiltonian(g, f, pp);
    const auto v = assemble_variational_hamiltonian(g, f, pp);
    const auto d = anomalous_delta(n, v);
    const double scale = n.max_abs();
    EXPECT_EQ(d.H.nonZeros(), g.size());
    double maxcos = 0;
    for (int p = 0; p < g.size(); ++p) {
        const double c = std::cos(g.node(p).u);
        maxcos = std::max(maxcos, std::abs(c));
        EXPECT_NEAR(std::abs(d.H.coeff(p, p) - cplx(0, -2 * a * c)), 0.0, 1e-13 * scale);
    }
    EXPECT_NEAR(hermiticity_residual(n), 2 * a * maxcos, 1e-10);
    EXPECT_LE(hermiticity_residual(v), 1e-8 * v.max_abs());
}

TEST(ReducedOperators, AnomalousDeltaVanishesOnMinimalSurface) {
    const auto g = SurfaceGrid::build(chart(presets::catenoid(1, 1)), 16, 12);
    const ParticleParams pp{1.0, 1.0};
    const auto f = fields::uniform(Vec3(0.3, 0.2, 1.0));
    const auto d = anomalous_delta(assemble_naive_hamiltonian(g, f, pp), assemble_variational_hamiltonian(g, f, pp));
    EXPECT_EQ(d.H.nonZeros(), 0);
}

TEST(ReducedOperators, AnomalousDeltaRejectsMismatch) {
    const ParticleParams pp{1.0, 1.0};
    const auto f = fields::uniform(Vec3(0, 0, 1));
    const auto a = assemble_naive_hamiltonian(sphere_grid(8, 16), f, pp);
    const auto b = assemble_variational_hamiltonian(sphere_grid(8, 18), f, pp);
    try {
        anomalous_delta(a, b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::GridMismatch);
    }
    AssemblyOptions half;
    half.coef_adv = 0.5;
    const auto g = sphere_grid(8, 16);
    EXPECT_THROW(anomalous_delta(assemble_naive_hamiltonian(g, f, pp, half),
                                 assemble_variational_hamiltonian(g, f, pp, half)),
                 Error);
}

TEST(ReducedOperators, AxialFieldOnCylinderIsHermitian) {
    const auto g = SurfaceGrid::build(chart(presets::cylinder(1.0, 2.0)), 24, 12);
    const ParticleParams pp{1.0, 1.0};
    for (const auto& f : {fields::uniform(Vec3(0, 0, 0.8)), fields::azimuthal(0.5)}) {
        const auto v = assemble_variational_hamiltonian(g, f, pp);
        EXPECT_LE(hermiticity_residual(v), 1e-8 * v.max_abs());
        const auto n = assemble_naive_hamiltonian(g, f, pp);
        EXPECT_LE(hermiticity_residual(n), 1e-8 * n.max_abs());
    }
}

TEST(ReducedOperators, TripletRoundTrip) {
    const auto g = sphere_grid(8, 16);
    const auto op = assemble_naive_hamiltonian(g, fields::uniform(Vec3(0, 0, 1)), {1.0, 1.0});
    std::stringstream ss;
    write_triplets(op, ss);
    const auto back = read_triplets(ss);
    EXPECT_EQ(back.meta, op.meta);
    EXPECT_EQ(max_abs(back.H - op.H), 0.0);
    EXPECT_EQ((back.weights - op.weights).cwiseAbs().maxCoeff(), 0.0);
    std::stringstream bad("{\"format\":\"other\"}\n");
    EXPECT_THROW(read_triplets(bad), Error);
}

// ---------------------------------------------------------------------------

TEST(Slab, PlaneTransverseEnergies) {
    const auto g = SurfaceGrid::build(chart(presets::plane(1, 1)), 4, 4, EdgeRule::Dirichlet, EdgeRule::Dirichlet);
    const double eps = 0.05;
    const ParticleParams pp{1.0, 0.0};
    const auto sd = SlabGrid::build(g, 40, eps, TransverseRule::Dirichlet);
    EXPECT_NEAR(transverse_ground_energy(sd, 0, pp, BoundaryCondition::dirichlet()),
                kPi * kPi / (8 * eps * eps), 1e-3 * kPi * kPi / (8 * eps * eps));
    const auto sn = SlabGrid::build(g, 12, eps, TransverseRule::Neumann);
    EXPECT_NEAR(transverse_ground_energy(sn, 0, pp, BoundaryCondition::neumann()), 0.0, 1e-9);
}

TEST(Slab, OperatorsAreSelfAdjointAtZeroCharge) {
    const auto g = SurfaceGrid::build(chart(presets::torus(2, 1)), 8, 6);
    for (const auto& bc : {BoundaryCondition::dirichlet(), BoundaryCondition::neumann(2, 2)}) {
        const auto slab = SlabGrid::build(g, 5, 0.05, bc.kind == BoundaryCondition::Kind::Dirichlet
                                                          ? TransverseRule::Dirichlet
                                                          : TransverseRule::Neumann);
        const auto op = assemble_slab_hamiltonian(slab, fields::zero(), {1.0, 0.0}, bc, Confinement::none());
        EXPECT_EQ(op.dimension(), slab.size());
        EXPECT_LE(hermiticity_residual(op), 1e-10 * op.max_abs()) << bc.label();
    }
}

TEST(Slab, BoundaryRuleMustMatch) {
    const auto g = SurfaceGrid::build(chart(presets::torus(2, 1)), 8, 6);
    const auto slab = SlabGrid::build(g, 5, 0.05, TransverseRule::Dirichlet);
    EXPECT_THROW(assemble_slab_hamiltonian(slab, fields::zero(), {1.0, 0.0}, BoundaryCondition::neumann(),
                                           Confinement::none()),
                 Error);
}

TEST(Slab, HarmonicConfinementRaisesSpectrum) {
    const auto g = SurfaceGrid::build(chart(presets::cylinder(1, 1)), 8, 6);
    const auto slab = SlabGrid::build(g, 6, 0.05, TransverseRule::Dirichlet);
    const auto bc = BoundaryCondition::dirichlet();
    const auto a = solve_lowest(assemble_slab_hamiltonian(slab, fields::zero(), {1, 0}, bc, Confinement::none()),
                                cfg_k(2));
    const auto b = solve_lowest(
        assemble_slab_hamiltonian(slab, fields::zero(), {1, 0}, bc, Confinement::harmonic(50.0)), cfg_k(2));
    EXPECT_GT(b.eigenvalues[0].real(), a.eigenvalues[0].real());
}

TEST(Slab, XiReductionCheck) {
    auto profile = [](double x) { return std::exp(-(x - 0.05) * (x - 0.05) / (2 * 0.09)); };
    const auto p = sample_geometry(presets::plane(), 1, 1);
    EXPECT_NEAR(xi_reduction_check(p, profile, 1e-2), 0.0, 1e-12);
    const auto s = sample_geometry(presets::sphere(1.0), 1.0, 1.0);
    EXPECT_LE(xi_reduction_check(s, profile, 1e-3), 1e-4);
    const double d1 = xi_reduction_check(s, profile, 1e-2), d2 = xi_reduction_check(s, profile, 5e-3);
    EXPECT_GE(d1 / d2, 1.8);
}

// ---------------------------------------------------------------------------

TEST(Solver, DiagonalMatrixExact) {
    const int n = 20;
    DiscreteOperator op;
    op.H.resize(n, n);
    for (int i = 0; i < n; ++i) op.H.insert(i, i) = 1.0 + i;
    op.weights = RVec::Ones(n);
    const auto r = solve_lowest(op, cfg_k(4));
    for (int i = 0; i < 4; ++i) EXPECT_EQ(r.eigenvalues[i], cplx(1.0 + i));
    EXPECT_TRUE(r.hermitian_mode);
}

TEST(Solver, KrylovMatchesDense) {
    const auto g = sphere_grid(12, 24);
    for (double q : {0.0, 1.0}) {
        const auto op = assemble_naive_hamiltonian(g, fields::uniform(Vec3(0, 0, 1)), {1.0, q});
        SolverConfig c = cfg_k(6, cplx(-0.1, 0));
        const auto dense = solve_lowest(op, c);
        c.force_krylov = true;
        const auto kry = solve_lowest(op, c);
        ASSERT_TRUE(dense.all_converged && kry.all_converged);
        EXPECT_NE(dense.method, kry.method);
        for (int i = 0; i < 6; ++i) {
            // Complex pairs with equal real part may swap order; compare sorted multisets by nearest match.
            double best = 1e9;
            for (int j = 0; j < 6; ++j) best = std::min(best, std::abs(dense.eigenvalues[i] - kry.eigenvalues[j]));
            EXPECT_LE(best, 1e-8) << "q=" << q << " i=" << i;
        }
    }
}

TEST(Solver, DeterministicForFixedSeed) {
    const auto op = assemble_laplace_beltrami(sphere_grid(24, 48), 1.0);
    const auto a = solve_lowest(op, cfg_k(4));
    const auto b = solve_lowest(op, cfg_k(4));
    for (int i = 0; i < 4; ++i) EXPECT_EQ(a.eigenvalues[i], b.eigenvalues[i]);
    EXPECT_EQ((a.eigenvectors - b.eigenvectors).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Solver, EigenvectorsAreWeightedNormalAndPhaseFixed) {
    const auto op = assemble_laplace_beltrami(sphere_grid(10, 20), 1.0);
    const auto r = solve_lowest(op, cfg_k(4));
    for (int i = 0; i < 4; ++i) {
        const CVec v = r.eigenvectors.col(i);
        EXPECT_NEAR(detail::wnorm(v, op.weights), 1.0, 1e-12);
        Eigen::Index p;
        v.cwiseAbs().maxCoeff(&p);
        EXPECT_NEAR(v[p].imag(), 0.0, 1e-14);
        EXPECT_GT(v[p].real(), 0.0);
    }
}

TEST(Solver, SingularShift) {
    const int n = 700;
    DiscreteOperator op;
    op.H.resize(n, n);
    for (int i = 0; i < n; ++i) op.H.insert(i, i) = static_cast<double>(i);
    op.weights = RVec::Ones(n);
    try {
        solve_lowest(op, cfg_k(3, cplx(5.0, 0.0)));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SingularShift);
    }
}

TEST(Solver, NotConvergedIsFlagged) {
    const auto op = assemble_laplace_beltrami(sphere_grid(48, 96), 1.0);
    SolverConfig c = cfg_k(9, cplx(-0.1, 0));
    c.max_iter = 1;
    c.restart = 20;
    const auto r = solve_lowest(op, c);
    EXPECT_FALSE(r.all_converged);
    EXPECT_THROW(r.require_converged(), Error);
}

TEST(Solver, ConfigValidation) {
    const auto op = assemble_laplace_beltrami(sphere_grid(8, 8), 1.0);
    SolverConfig c;
    c.k = 0;
    EXPECT_THROW(solve_lowest(op, c), Error);
    c = SolverConfig{};
    c.k = 63;
    EXPECT_THROW(solve_lowest(op, c), Error);
    c = SolverConfig{};
    c.restart = 5;
    EXPECT_THROW(solve_lowest(op, c), Error);
}

TEST(NormDrift, HermitianIsUnitary) {
    const auto op = assemble_laplace_beltrami(sphere_grid(16, 32), 1.0);
    CVec psi = CVec::Random(op.dimension());
    psi /= detail::wnorm(psi, op.weights);
    const double dt = 0.5 / detail::row_norm_inf(op.H);
    const auto n = norm_drift(op, 100, dt, psi);
    for (double x : n) EXPECT_NEAR(x, 1.0, 1e-8);
    EXPECT_THROW(norm_drift(op, 1, 2.0 / detail::row_norm_inf(op.H), psi), Error);
}

TEST(NormDrift, NaiveOperatorLosesNormInNorthernPacket) {
    const auto g = sphere_grid(16, 32);
    const ParticleParams pp{1.0, 1.0};
    const double a = 1.0;
    const auto f = fields::uniform(Vec3(0, 0, a));
    const auto op = assemble_naive_hamiltonian(g, f, pp);
    CVec psi(g.size());
    double mean_cos = 0, norm = 0;
    for (int p = 0; p < g.size(); ++p) {
        const double th = g.node(p).u;
        psi[p] = std::exp(-(th - 0.6) * (th - 0.6) / 0.08);
        norm += op.weights[p] * std::norm(psi[p]);
    }
    psi /= std::sqrt(norm);
    for (int p = 0; p < g.size(); ++p) mean_cos += op.weights[p] * std::norm(psi[p]) * std::cos(g.node(p).u);
    const double dt = 1e-3 / detail::row_norm_inf(op.H);
    const auto n = norm_drift(op, 20, dt, psi);
    for (std::size_t i = 1; i < n.size(); ++i) EXPECT_LT(n[i], n[i - 1]);
    const double rate = (n[0] - n[1]) / dt;
    const double expect = 2 * mean_cos * 2.0 * pp.charge / pp.mass * a;
    EXPECT_NEAR(rate, expect, 0.1 * expect);

    const auto neutral = assemble_naive_hamiltonian(g, f, {1.0, 0.0});
    const auto m = norm_drift(neutral, 50, 0.5 / detail::row_norm_inf(neutral.H), psi);
    EXPECT_NEAR(m.back(), 1.0, 1e-8);
}
