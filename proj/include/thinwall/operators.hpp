#pragma once

// Discrete Hamiltonians on surface and slab grids.
//
// Every operator is assembled as a sesquilinear form B = W H over node weights W
// (the sqrt(g) / sqrt(G) measure), then H = W^{-1} B. Kinetic terms come from the
// discrete energy sum_faces c |psi_i - psi_j|^2, which keeps them self-adjoint in
// the weighted inner product. First-order field terms use the skew-symmetric split
// (1/2)[A.grad psi + div(A psi)], exactly Hermitian in the same inner product.

#include "thinwall/core.hpp"
#include "thinwall/fields.hpp"
#include "thinwall/geometry.hpp"
#include "thinwall/grid.hpp"

#include <Eigen/Sparse>
#include "json.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace thinwall {

using SpMat = Eigen::SparseMatrix<cplx>;
using Trip = Eigen::Triplet<cplx>;

enum class ModelVariant { LaplaceBeltrami, NaiveReduced, Variational, Slab3D };

inline const char* to_string(ModelVariant v) {
    switch (v) {
        case ModelVariant::LaplaceBeltrami: return "laplace_beltrami";
        case ModelVariant::NaiveReduced: return "naive";
        case ModelVariant::Variational: return "variational";
        case ModelVariant::Slab3D: return "slab3d";
    }
    return "?";
}

struct OperatorMeta {
    std::string variant;
    std::string gauge = "as_given";
    std::string bc;
    std::string field = "zero";
    std::string chart;
    std::uint64_t grid_hash = 0;
    int n_u = 0, n_v = 0, n3 = 0;
    double eps = 0;
    double mass = 1, charge = 0;
    double coef_adv = 1;
    bool geometric_potential = true;
    std::string divergence_term;  // how (qi/2m) div A is evaluated
    std::vector<std::string> dropped_terms;
    std::string confinement = "none";

    nlohmann::json to_json() const {
        return {{"variant", variant},         {"gauge", gauge},
                {"bc", bc},                   {"field", field},
                {"chart", chart},             {"grid_hash", std::to_string(grid_hash)},
                {"n_u", n_u},                 {"n_v", n_v},
                {"n3", n3},                   {"eps", eps},
                {"mass", mass},               {"charge", charge},
                {"coef_adv", coef_adv},       {"geometric_potential", geometric_potential},
                {"divergence_term", divergence_term}, {"dropped_terms", dropped_terms},
                {"confinement", confinement}};
    }
    static OperatorMeta from_json(const nlohmann::json& j) {
        OperatorMeta m;
        m.variant = j.at("variant");
        m.gauge = j.at("gauge");
        m.bc = j.at("bc");
        m.field = j.at("field");
        m.chart = j.at("chart");
        m.grid_hash = std::stoull(j.at("grid_hash").get<std::string>());
        m.n_u = j.at("n_u");
        m.n_v = j.at("n_v");
        m.n3 = j.at("n3");
        m.eps = j.at("eps");
        m.mass = j.at("mass");
        m.charge = j.at("charge");
        m.coef_adv = j.at("coef_adv");
        m.geometric_potential = j.at("geometric_potential");
        m.divergence_term = j.at("divergence_term");
        m.dropped_terms = j.at("dropped_terms").get<std::vector<std::string>>();
        m.confinement = j.at("confinement");
        return m;
    }
    bool operator==(const OperatorMeta&) const = default;
};

struct DiscreteOperator {
    SpMat H;        // column-major, no explicit zeros
    RVec weights;   // inner-product weights (sqrt(g) * cell volume)
    OperatorMeta meta;

    int dimension() const { return static_cast<int>(H.rows()); }
    double max_abs() const {
        double m = 0;
        for (int k = 0; k < H.outerSize(); ++k)
            for (SpMat::InnerIterator it(H, k); it; ++it) m = std::max(m, std::abs(it.value()));
        return m;
    }
    int max_row_nnz() const {
        std::vector<int> cnt(H.rows(), 0);
        for (int k = 0; k < H.outerSize(); ++k)
            for (SpMat::InnerIterator it(H, k); it; ++it) ++cnt[it.row()];
        return cnt.empty() ? 0 : *std::max_element(cnt.begin(), cnt.end());
    }
};

/// max |(H - H^+)/2| with H^+ = W^{-1} H^dagger W the adjoint in the weighted inner product.
inline double hermiticity_residual(const DiscreteOperator& op) {
    const SpMat Ht = op.H.adjoint();
    double m = 0;
    // (H - W^{-1} H^dagger W)_{ij} = H_ij - conj(H_ji) W_j / W_i
    SpMat adj = Ht;
    for (int k = 0; k < adj.outerSize(); ++k)
        for (SpMat::InnerIterator it(adj, k); it; ++it) it.valueRef() *= op.weights[it.col()] / op.weights[it.row()];
    const SpMat D = op.H - adj;
    for (int k = 0; k < D.outerSize(); ++k)
        for (SpMat::InnerIterator it(D, k); it; ++it) m = std::max(m, 0.5 * std::abs(it.value()));
    return m;
}

namespace detail {

class FormBuilder {
public:
    explicit FormBuilder(RVec weights) : w_(std::move(weights)) {}

    void add(int i, int j, cplx v) {
        if (v != cplx(0.0)) t_.emplace_back(i, j, v);
    }
    // c |psi_i - psi_j|^2
    void couple(int i, int j, double c) {
        add(i, i, c);
        add(j, j, c);
        add(i, j, -c);
        add(j, i, -c);
    }
    // c |psi_i - 0|^2
    void ground(int i, double c) { add(i, i, c); }
    // Skew-symmetric first-order term along a link i -> j (j forward), times coef.
    void skew(int i, int j, double val, cplx coef) {
        add(i, j, coef * val);
        add(j, i, -coef * val);
    }
    const RVec& weights() const { return w_; }

    SpMat finish() const {
        const int n = static_cast<int>(w_.size());
        SpMat B(n, n);
        B.setFromTriplets(t_.begin(), t_.end());
        for (int k = 0; k < B.outerSize(); ++k)
            for (SpMat::InnerIterator it(B, k); it; ++it) it.valueRef() /= w_[it.row()];
        B.prune([](const Eigen::Index&, const Eigen::Index&, const cplx& v) { return v != cplx(0.0); });
        B.makeCompressed();
        return B;
    }

private:
    RVec w_;
    std::vector<Trip> t_;
};

// Index ranges of faces / corners between node t and t+1 along an axis.
inline std::pair<int, int> link_range(const AxisGrid& a) {
    switch (a.rule) {
        case EdgeRule::Periodic: return {0, a.n - 1};
        case EdgeRule::Dirichlet: return {-1, a.n - 1};
        case EdgeRule::Neumann: return {0, a.n - 2};
    }
    return {0, -1};
}

inline Link axis_link(const SurfaceGrid& g, int i, int j) {
    const AxisGrid& au = g.axis_u();
    const AxisGrid& av = g.axis_v();
    auto wrap = [](const AxisGrid& a, int t, bool& ok, bool& zero) {
        ok = true;
        zero = false;
        if (t >= 0 && t < a.n) return t;
        if (a.rule == EdgeRule::Periodic) return ((t % a.n) + a.n) % a.n;
        if (a.rule == EdgeRule::Dirichlet && (t == -1 || t == a.n)) {
            zero = true;
            return -1;
        }
        ok = false;
        return -1;
    };
    bool oku, zu, okv, zv;
    const int ii = wrap(au, i, oku, zu);
    const int jj = wrap(av, j, okv, zv);
    if (!oku || !okv) return {Link::None, -1};
    if (zu || zv) return {Link::Zero, -1};
    return {Link::Node, g.index(ii, jj)};
}

// Visit kinetic couplings of a surface layer. `coef(sample_at_face, dir)` returns
// sqrt(G) G^{dd} at the face; `cross(sample_at_corner)` returns sqrt(G) G^{uv}.
// `emit_couple(p, q, c)`, `emit_ground(p, c)`, `emit_cross(nodes[4], c)` receive
// already-scaled coefficients.
template <class FaceCoef, class CrossCoef, class Couple, class Ground, class Cross>
void visit_surface_kinetic(const SurfaceGrid& g, FaceCoef face_coef, CrossCoef cross_coef, Couple emit_couple,
                           Ground emit_ground, Cross emit_cross) {
    const AxisGrid& au = g.axis_u();
    const AxisGrid& av = g.axis_v();
    const double hu = au.h, hv = av.h;
    // u-faces
    {
        const auto [lo, hi] = link_range(au);
        for (int j = 0; j < av.n; ++j) {
            for (int i = lo; i <= hi; ++i) {
                const Link a = axis_link(g, i, j), b = axis_link(g, i + 1, j);
                const double c = face_coef(g.sample_at(i + 0.5, j), 0) * hv / hu;
                if (a.kind == Link::Node && b.kind == Link::Node) emit_couple(a.index, b.index, c);
                else if (a.kind == Link::Node && b.kind == Link::Zero) emit_ground(a.index, c);
                else if (a.kind == Link::Zero && b.kind == Link::Node) emit_ground(b.index, c);
            }
        }
    }
    // v-faces
    {
        const auto [lo, hi] = link_range(av);
        for (int i = 0; i < au.n; ++i) {
            for (int j = lo; j <= hi; ++j) {
                const Link a = axis_link(g, i, j), b = axis_link(g, i, j + 1);
                const double c = face_coef(g.sample_at(i, j + 0.5), 1) * hu / hv;
                if (a.kind == Link::Node && b.kind == Link::Node) emit_couple(a.index, b.index, c);
                else if (a.kind == Link::Node && b.kind == Link::Zero) emit_ground(a.index, c);
                else if (a.kind == Link::Zero && b.kind == Link::Node) emit_ground(b.index, c);
            }
        }
    }
    // corners (mixed metric component)
    const auto [ulo, uhi] = link_range(au);
    const auto [vlo, vhi] = link_range(av);
    for (int j = vlo; j <= vhi; ++j) {
        for (int i = ulo; i <= uhi; ++i) {
            const Link n00 = axis_link(g, i, j), n01 = axis_link(g, i, j + 1);
            const Link n10 = axis_link(g, i + 1, j), n11 = axis_link(g, i + 1, j + 1);
            if (n00.kind == Link::None || n01.kind == Link::None || n10.kind == Link::None ||
                n11.kind == Link::None) {
                continue;
            }
            const double c = cross_coef(g.sample_at(i + 0.5, j + 0.5));
            if (c == 0.0) continue;
            // D_u weights / D_v weights on [00, 01, 10, 11]
            const std::array<Link, 4> nodes = {n00, n01, n10, n11};
            const std::array<double, 4> a = {-1 / (2 * hu), -1 / (2 * hu), 1 / (2 * hu), 1 / (2 * hu)};
            const std::array<double, 4> b = {-1 / (2 * hv), 1 / (2 * hv), -1 / (2 * hv), 1 / (2 * hv)};
            emit_cross(nodes, a, b, c * hu * hv);
        }
    }
}

// Relative threshold below which the mixed metric term is treated as absent.
inline double cross_cutoff(double sqrtG, const Mat2& Ginv, double value) {
    return std::abs(value) <= 1e-12 * sqrtG * (std::abs(Ginv(0, 0)) + std::abs(Ginv(1, 1))) ? 0.0 : value;
}

}  // namespace detail

struct AssemblyOptions {
    bool geometric_potential = true;
    double coef_adv = 1.0;  // multiplies -(qi/m) A_par . grad_par
};

namespace detail {

inline void add_surface_kinetic(FormBuilder& fb, const SurfaceGrid& grid, double mass) {
    const double k = 1.0 / (2.0 * mass);
    visit_surface_kinetic(
        grid,
        [](const GeometrySample& s, int dir) { return s.sqrt_g() * s.g_inv(dir, dir); },
        [](const GeometrySample& s) { return cross_cutoff(s.sqrt_g(), s.g_inv, s.sqrt_g() * s.g_inv(0, 1)); },
        [&](int p, int q, double c) { fb.couple(p, q, k * c); },
        [&](int p, double c) { fb.ground(p, k * c); },
        [&](const std::array<Link, 4>& nodes, const std::array<double, 4>& a, const std::array<double, 4>& b,
            double c) {
            for (int r = 0; r < 4; ++r) {
                if (nodes[r].kind != Link::Node) continue;
                for (int s = 0; s < 4; ++s) {
                    if (nodes[s].kind != Link::Node) continue;
                    fb.add(nodes[r].index, nodes[s].index, k * c * (a[r] * b[s] + b[r] * a[s]));
                }
            }
        });
}

inline RVec surface_weights(const SurfaceGrid& grid) {
    RVec w(grid.size());
    for (int p = 0; p < grid.size(); ++p) w[p] = grid.weight(p);
    return w;
}

inline OperatorMeta surface_meta(const SurfaceGrid& grid, const ParticleParams& pp, ModelVariant v) {
    OperatorMeta m;
    m.variant = to_string(v);
    m.chart = grid.chart().name;
    m.grid_hash = grid.hash();
    m.n_u = grid.n_u();
    m.n_v = grid.n_v();
    m.mass = pp.mass;
    m.charge = pp.charge;
    m.bc = std::string("u:") + to_string(grid.axis_u().rule) + ",v:" + to_string(grid.axis_v().rule);
    return m;
}

// Field-dependent terms shared by the reduced variants (everything but A^3 M).
inline void add_surface_field_terms(FormBuilder& fb, const SurfaceGrid& grid, const std::vector<SurfaceFieldSample>& f,
                                    const VectorPotentialField& field, const ParticleParams& pp, double coef_adv) {
    const double q = pp.charge, m = pp.mass;
    if (q == 0.0) return;
    const RVec& w = fb.weights();
    for (int p = 0; p < grid.size(); ++p) {
        const double A2 = f[p].A.squaredNorm();
        const cplx d = q * q * A2 / (2 * m) + cplx(0, q / (2 * m)) * f[p].div3 - q * field.scalar(grid.node(p).position);
        fb.add(p, p, w[p] * d);
    }
    if (coef_adv == 0.0) return;
    const cplx coef = coef_adv * cplx(0, -q / m);
    for (int j = 0; j < grid.n_v(); ++j) {
        for (int i = 0; i < grid.n_u(); ++i) {
            const int p = grid.index(i, j);
            for (int dir = 0; dir < 2; ++dir) {
                const Link nb = grid.neighbor(i, j, dir, +1);
                if (nb.kind != Link::Node) continue;
                const double h = dir == 0 ? grid.axis_u().h : grid.axis_v().h;
                const double val = (w[p] * f[p].A_par[dir] + w[nb.index] * f[nb.index].A_par[dir]) / (4 * h);
                fb.skew(p, nb.index, val, coef);
            }
        }
    }
}

}  // namespace detail

/// -(1/2m) (1/sqrt g) d_a(sqrt g g^{ab} d_b), divergence form.
inline DiscreteOperator assemble_laplace_beltrami(const SurfaceGrid& grid, double mass) {
    detail::FormBuilder fb(detail::surface_weights(grid));
    detail::add_surface_kinetic(fb, grid, mass);
    DiscreteOperator op;
    op.H = fb.finish();
    op.weights = fb.weights();
    op.meta = detail::surface_meta(grid, {mass, 0.0}, ModelVariant::LaplaceBeltrami);
    op.meta.geometric_potential = false;
    return op;
}

namespace detail {

inline DiscreteOperator assemble_reduced(const SurfaceGrid& grid, const VectorPotentialField& field,
                                         const ParticleParams& pp, const AssemblyOptions& opt, bool naive) {
    pp.validate();
    FormBuilder fb(surface_weights(grid));
    add_surface_kinetic(fb, grid, pp.mass);
    const RVec& w = fb.weights();
    if (opt.geometric_potential) {
        for (int p = 0; p < grid.size(); ++p) {
            fb.add(p, p, w[p] * geometric_potential(grid.node(p), pp.mass));
        }
    }
    std::vector<SurfaceFieldSample> f;
    if (pp.charge != 0.0) {
        f = sample_field(grid, field);
        add_surface_field_terms(fb, grid, f, field, pp, opt.coef_adv);
        if (naive) {
            for (int p = 0; p < grid.size(); ++p) {
                fb.add(p, p, w[p] * cplx(0, -pp.charge / pp.mass) * f[p].A3 * grid.node(p).M);
            }
        }
    }
    DiscreteOperator op;
    op.H = fb.finish();
    op.weights = w;
    op.meta = surface_meta(grid, pp, naive ? ModelVariant::NaiveReduced : ModelVariant::Variational);
    op.meta.field = field.label;
    op.meta.coef_adv = opt.coef_adv;
    op.meta.geometric_potential = opt.geometric_potential;
    op.meta.divergence_term = "ambient_fd";
    op.meta.dropped_terms = {"A3*d3"};
    return op;
}

}  // namespace detail

/// H = LB + V0 + q^2 A^2/2m + (qi/2m) div A - (qi/m)(A_par.grad_par + A^3 M) - q A_t.
/// The A^3 d_3 term has no representation on a surface grid and is recorded as dropped.
inline DiscreteOperator assemble_naive_hamiltonian(const SurfaceGrid& grid, const VectorPotentialField& field,
                                                   const ParticleParams& pp, const AssemblyOptions& opt = {}) {
    return detail::assemble_reduced(grid, field, pp, opt, true);
}

/// Same as the naive operator without the -(qi/m) A^3 M coupling.
inline DiscreteOperator assemble_variational_hamiltonian(const SurfaceGrid& grid, const VectorPotentialField& field,
                                                         const ParticleParams& pp, const AssemblyOptions& opt = {}) {
    return detail::assemble_reduced(grid, field, pp, opt, false);
}

/// H_naive - H_var. Both must share grid, particle, field and coef_adv = 1.
inline DiscreteOperator anomalous_delta(const DiscreteOperator& naive, const DiscreteOperator& var) {
    const auto& a = naive.meta;
    const auto& b = var.meta;
    if (a.grid_hash != b.grid_hash || naive.dimension() != var.dimension()) {
        throw Error(ErrorKind::GridMismatch, "operators live on different grids");
    }
    if (a.mass != b.mass || a.charge != b.charge || a.field != b.field || a.coef_adv != 1.0 || b.coef_adv != 1.0 ||
        a.geometric_potential != b.geometric_potential) {
        throw Error(ErrorKind::GridMismatch, "operators differ in particle, field or coef_adv");
    }
    DiscreteOperator d;
    d.H = naive.H - var.H;
    d.H.prune([](const Eigen::Index&, const Eigen::Index&, const cplx& v) { return v != cplx(0.0); });
    d.weights = naive.weights;
    d.meta = a;
    d.meta.variant = "anomalous_delta";
    d.meta.dropped_terms.clear();
    return d;
}

// ---------------------------------------------------------------------------
// Slab operator.

struct Confinement {
    enum class Kind { None, Harmonic } kind = Kind::None;
    double omega = 0;

    static Confinement none() { return {}; }
    static Confinement harmonic(double w) { return {Kind::Harmonic, w}; }
    std::string label() const {
        return kind == Kind::None ? "none" : "harmonic(omega=" + std::to_string(omega) + ")";
    }
};

namespace detail {

// Tangent basis of the x3-layer: e_a = r_a - x3 n_a with n_a = S^c_a r_c.
inline std::pair<Vec3, Vec3> layer_tangents(const GeometrySample& s, double x3) {
    const Mat2 S = s.shape();
    const Vec3 nu = S(0, 0) * s.tangent_u + S(1, 0) * s.tangent_v;
    const Vec3 nv = S(0, 1) * s.tangent_u + S(1, 1) * s.tangent_v;
    return {s.tangent_u - x3 * nu, s.tangent_v - x3 * nv};
}

// xi on a transverse face as the geometric mean of its end values. With this choice the
// discrete psi -> chi map turns the transverse form into -(1/2m) D^2 chi + (1/2m)(D^2 s / s) chi,
// s = xi^{1/2}, mirroring the continuum reduction exactly.
inline double face_xi(const SlabGrid& slab, int s, double xa, double xb) {
    return std::sqrt(slab.xi(s, xa) * slab.xi(s, xb));
}

// Central difference of s'/s (s = xi^{1/2}) at the bottom (side 0) or top face node,
// using the ghost node one step outside the slab.
inline double face_log_slope(const SlabGrid& slab, int s, int side) {
    const double h = slab.h3();
    const double x = side == 0 ? slab.x3(0) : slab.x3(slab.n3() - 1);
    auto sq = [&](double t) { return std::sqrt(slab.xi(s, t)); };
    return (sq(x + h) - sq(x - h)) / (2 * h * sq(x));
}

}  // namespace detail

/// Full 3D minimally coupled operator on the slab, acting on chi = xi^{1/2} psi.
inline DiscreteOperator assemble_slab_hamiltonian(const SlabGrid& slab, const VectorPotentialField& field,
                                                  const ParticleParams& pp, const BoundaryCondition& bc,
                                                  const Confinement& conf = {}) {
    pp.validate();
    bc.validate();
    const bool neumann = bc.kind == BoundaryCondition::Kind::NeumannConstraint;
    if (neumann != (slab.rule() == TransverseRule::Neumann)) {
        throw Error(ErrorKind::InvalidArgument, "slab transverse rule does not match the boundary condition");
    }
    const SurfaceGrid& sg = slab.surface();
    const int Ns = sg.size(), n3 = slab.n3();
    const double hu = sg.axis_u().h, hv = sg.axis_v().h, h3 = slab.h3();
    const double m = pp.mass, q = pp.charge, k = 1.0 / (2.0 * m);

    RVec wpsi(slab.size());
    for (int kk = 0; kk < n3; ++kk)
        for (int s = 0; s < Ns; ++s) wpsi[slab.index(s, kk)] = slab.weight(s, kk) * slab.xi(s, slab.x3(kk));
    detail::FormBuilder fb(wpsi);

    // In-layer kinetic terms with the offset metric.
    for (int kk = 0; kk < n3; ++kk) {
        const double x3 = slab.x3(kk);
        const double tw = h3 * slab.transverse_weight(kk);
        auto L = [&](int p) { return slab.index(p, kk); };
        detail::visit_surface_kinetic(
            sg,
            [&](const GeometrySample& s, int dir) {
                const Mat2 Ginv = offset_metric(s, x3).inverse();
                return s.sqrt_g() * xi_factor(s.M, s.K_gauss, x3) * Ginv(dir, dir);
            },
            [&](const GeometrySample& s) {
                const Mat2 Ginv = offset_metric(s, x3).inverse();
                const double sG = s.sqrt_g() * xi_factor(s.M, s.K_gauss, x3);
                return detail::cross_cutoff(sG, Ginv, sG * Ginv(0, 1));
            },
            [&](int p, int r, double c) { fb.couple(L(p), L(r), k * tw * c); },
            [&](int p, double c) { fb.ground(L(p), k * tw * c); },
            [&](const std::array<Link, 4>& nodes, const std::array<double, 4>& a, const std::array<double, 4>& b,
                double c) {
                for (int r = 0; r < 4; ++r) {
                    if (nodes[r].kind != Link::Node) continue;
                    for (int s = 0; s < 4; ++s) {
                        if (nodes[s].kind != Link::Node) continue;
                        fb.add(L(nodes[r].index), L(nodes[s].index), k * tw * c * (a[r] * b[s] + b[r] * a[s]));
                    }
                }
            });
    }

    // Transverse kinetic term sqrt(g) xi |d3 psi|^2 and the face constraint.
    for (int s = 0; s < Ns; ++s) {
        const auto& node = sg.node(s);
        const double area = node.sqrt_g() * hu * hv;
        for (int kk = 0; kk + 1 < n3; ++kk) {
            fb.couple(slab.index(s, kk), slab.index(s, kk + 1),
                      k * area * detail::face_xi(slab, s, slab.x3(kk), slab.x3(kk + 1)) / h3);
        }
        if (!neumann) {
            fb.ground(slab.index(s, 0), k * area * detail::face_xi(slab, s, -slab.eps(), slab.x3(0)) / h3);
            fb.ground(slab.index(s, n3 - 1),
                      k * area * detail::face_xi(slab, s, slab.x3(n3 - 1), slab.eps()) / h3);
        } else {
            // (d3 + beta) chi = 0  <=>  (d3 + gamma) psi = 0, gamma = beta + xi'/(2 xi),
            // with xi'/(2 xi) = s'/s taken from the ghost-node stencil.
            for (int side = 0; side < 2; ++side) {
                const double x3 = side == 0 ? -slab.eps() : slab.eps();
                const int kk = side == 0 ? 0 : n3 - 1;
                const double A3cov = -field.vector(slab.position(s, x3)).dot(node.normal);
                const cplx beta = bc.c_M * node.M - cplx(0, bc.c_A * q * A3cov);
                const double xi = slab.xi(s, x3);
                const cplx gamma = beta + detail::face_log_slope(slab, s, side);
                const double sign = side == 0 ? -1.0 : 1.0;
                fb.add(slab.index(s, kk), slab.index(s, kk), sign * k * area * xi * gamma);
            }
        }
    }

    // Diagonal potentials and first-order field terms.
    for (int kk = 0; kk < n3; ++kk) {
        const double x3 = slab.x3(kk);
        if (conf.kind == Confinement::Kind::Harmonic) {
            for (int s = 0; s < Ns; ++s) {
                const int p = slab.index(s, kk);
                fb.add(p, p, wpsi[p] * 0.5 * m * conf.omega * conf.omega * x3 * x3);
            }
        }
    }
    if (q != 0.0) {
        // Contravariant components per node: (A^u, A^v, A^3).
        std::vector<Eigen::Vector3d> Acon(slab.size());
        for (int kk = 0; kk < n3; ++kk) {
            const double x3 = slab.x3(kk);
            for (int s = 0; s < Ns; ++s) {
                const auto& node = sg.node(s);
                const int p = slab.index(s, kk);
                const Vec3 X = slab.position(s, x3);
                const Vec3 A = field.vector(X);
                if (!A.allFinite()) throw Error(ErrorKind::SourceOnSurface, "field not finite inside the slab");
                const auto [eu, ev] = detail::layer_tangents(node, x3);
                const Eigen::Vector2d Acov(A.dot(eu), A.dot(ev));
                const Eigen::Vector2d Ain = offset_metric(node, x3).inverse() * Acov;
                Acon[p] = {Ain[0], Ain[1], -A.dot(node.normal)};
                const cplx d = q * q * A.squaredNorm() / (2 * m) +
                               cplx(0, q / (2 * m)) * ambient_divergence(field, X) - q * field.scalar(X);
                fb.add(p, p, wpsi[p] * d);
            }
        }
        const cplx coef(0, -q / m);
        for (int kk = 0; kk < n3; ++kk) {
            for (int j = 0; j < sg.n_v(); ++j) {
                for (int i = 0; i < sg.n_u(); ++i) {
                    const int s = sg.index(i, j);
                    const int p = slab.index(s, kk);
                    for (int dir = 0; dir < 2; ++dir) {
                        const Link nb = sg.neighbor(i, j, dir, +1);
                        if (nb.kind != Link::Node) continue;
                        const int r = slab.index(nb.index, kk);
                        const double h = dir == 0 ? hu : hv;
                        fb.skew(p, r, (wpsi[p] * Acon[p][dir] + wpsi[r] * Acon[r][dir]) / (4 * h), coef);
                    }
                    if (kk + 1 < n3) {
                        const int r = slab.index(s, kk + 1);
                        fb.skew(p, r, (wpsi[p] * Acon[p][2] + wpsi[r] * Acon[r][2]) / (4 * h3), coef);
                    }
                }
            }
        }
    }

    DiscreteOperator op;
    op.H = fb.finish();
    // psi -> chi similarity: H_chi = Xi^{1/2} H_psi Xi^{-1/2}, weights W / xi.
    RVec sx(slab.size());
    for (int kk = 0; kk < n3; ++kk)
        for (int s = 0; s < Ns; ++s) sx[slab.index(s, kk)] = std::sqrt(slab.xi(s, slab.x3(kk)));
    for (int c = 0; c < op.H.outerSize(); ++c)
        for (SpMat::InnerIterator it(op.H, c); it; ++it) it.valueRef() *= sx[it.row()] / sx[it.col()];
    op.weights.resize(slab.size());
    for (int p = 0; p < slab.size(); ++p) op.weights[p] = wpsi[p] / (sx[p] * sx[p]);

    op.meta = detail::surface_meta(sg, pp, ModelVariant::Slab3D);
    op.meta.grid_hash = slab.hash();
    op.meta.n3 = n3;
    op.meta.eps = slab.eps();
    op.meta.bc = bc.label();
    op.meta.field = field.label;
    op.meta.geometric_potential = false;
    op.meta.divergence_term = "ambient_fd";
    op.meta.confinement = conf.label();
    return op;
}

/// Lowest eigenvalue of the 1D transverse operator -(1/2m) xi^{-1} d3(xi d3) (chi form)
/// at one surface node, with the slab's boundary treatment. Used to strip the
/// transverse zero-point energy from slab spectra.
inline double transverse_ground_energy(const SlabGrid& slab, int s, const ParticleParams& pp,
                                       const BoundaryCondition& bc) {
    const int n3 = slab.n3();
    const auto& node = slab.surface().node(s);
    const double k = 1.0 / (2.0 * pp.mass), h3 = slab.h3();
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n3, n3);
    Eigen::VectorXd w(n3);
    for (int kk = 0; kk < n3; ++kk) w[kk] = h3 * slab.transverse_weight(kk) * slab.xi(s, slab.x3(kk));
    for (int kk = 0; kk + 1 < n3; ++kk) {
        const double c = k * detail::face_xi(slab, s, slab.x3(kk), slab.x3(kk + 1)) / h3;
        B(kk, kk) += c;
        B(kk + 1, kk + 1) += c;
        B(kk, kk + 1) -= c;
        B(kk + 1, kk) -= c;
    }
    if (bc.kind == BoundaryCondition::Kind::Dirichlet) {
        B(0, 0) += k * detail::face_xi(slab, s, -slab.eps(), slab.x3(0)) / h3;
        B(n3 - 1, n3 - 1) += k * detail::face_xi(slab, s, slab.x3(n3 - 1), slab.eps()) / h3;
    } else {
        for (int side = 0; side < 2; ++side) {
            const double x3 = side == 0 ? -slab.eps() : slab.eps();
            const int kk = side == 0 ? 0 : n3 - 1;
            const double xi = slab.xi(s, x3);
            const double gamma = bc.c_M * node.M + detail::face_log_slope(slab, s, side);
            B(kk, kk) += (side == 0 ? -1.0 : 1.0) * k * xi * gamma;
        }
    }
    // Symmetric form: W^{-1/2} B W^{-1/2}.
    const Eigen::VectorXd is = w.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd S = is.asDiagonal() * B * is.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    return es.eigenvalues()[0];
}

/// Defect of the transverse reduction identity
///   xi^{-1} d3(xi d3(xi^{-1/2} chi)) = d3^2 chi - 2m V0 chi   at x3 = 0,
/// both sides evaluated with 3-point stencils of step h3.
inline double xi_reduction_check(const GeometrySample& s, const std::function<double(double)>& profile, double h3,
                                 double mass = 1.0) {
    auto xi = [&](double x) { return xi_factor(s.M, s.K_gauss, x); };
    auto psi = [&](double x) { return profile(x) / std::sqrt(xi(x)); };
    const double lhs = (xi(0.5 * h3) * (psi(h3) - psi(0)) - xi(-0.5 * h3) * (psi(0) - psi(-h3))) / (xi(0) * h3 * h3);
    const double chi_dd = ((profile(h3) - profile(0)) - (profile(0) - profile(-h3))) / (h3 * h3);
    const double rhs = chi_dd - 2 * mass * geometric_potential(s, mass) * profile(0);
    return std::abs(lhs - rhs);
}

// ---------------------------------------------------------------------------
// Sparse triplet file: one line of JSON header, then "row,col,re,im" CSV.

inline void write_triplets(const DiscreteOperator& op, std::ostream& os) {
    nlohmann::json h;
    h["format"] = "thinwall-triplets-v1";
    h["dimension"] = op.dimension();
    h["nnz"] = op.H.nonZeros();
    h["meta"] = op.meta.to_json();
    h["weights"] = std::vector<double>(op.weights.data(), op.weights.data() + op.weights.size());
    os << h.dump() << "\n" << "row,col,re,im\n";
    os << std::setprecision(17);
    for (int k = 0; k < op.H.outerSize(); ++k)
        for (SpMat::InnerIterator it(op.H, k); it; ++it)
            os << it.row() << "," << it.col() << "," << it.value().real() << "," << it.value().imag() << "\n";
}

inline DiscreteOperator read_triplets(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw Error(ErrorKind::Io, "empty triplet stream");
    const auto h = nlohmann::json::parse(line);
    if (h.at("format") != "thinwall-triplets-v1") throw Error(ErrorKind::Io, "unknown triplet format");
    const int n = h.at("dimension");
    DiscreteOperator op;
    op.meta = OperatorMeta::from_json(h.at("meta"));
    const auto w = h.at("weights").get<std::vector<double>>();
    op.weights = Eigen::Map<const RVec>(w.data(), static_cast<Eigen::Index>(w.size()));
    std::getline(is, line);
    if (line != "row,col,re,im") throw Error(ErrorKind::Io, "missing triplet CSV header");
    std::vector<Trip> t;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto c = detail::split_csv_line(line);
        if (c.size() != 4) throw Error(ErrorKind::Io, "bad triplet row: " + line);
        const int r = std::stoi(c[0]), col = std::stoi(c[1]);
        if (r < 0 || r >= n || col < 0 || col >= n) throw Error(ErrorKind::Io, "triplet index out of range");
        t.emplace_back(r, col, cplx(std::stod(c[2]), std::stod(c[3])));
    }
    op.H.resize(n, n);
    op.H.setFromTriplets(t.begin(), t.end());
    op.H.makeCompressed();
    return op;
}

}  // namespace thinwall
