#pragma once

// Structured grids over a chart (surface) and over a thin slab around it.

#include "thinwall/core.hpp"
#include "thinwall/fields.hpp"
#include "thinwall/geometry.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace thinwall {

// Node placement along a chart direction.
//   Periodic : t0 + i h, h = span/n
//   Dirichlet: t0 + (i+1) h, h = span/(n+1); values vanish on the two boundary lines
//   Neumann  : t0 + (i+1/2) h, h = span/n; zero flux through the boundary faces
enum class EdgeRule { Periodic, Dirichlet, Neumann };

inline const char* to_string(EdgeRule r) {
    switch (r) {
        case EdgeRule::Periodic: return "periodic";
        case EdgeRule::Dirichlet: return "dirichlet";
        case EdgeRule::Neumann: return "neumann";
    }
    return "?";
}

struct AxisGrid {
    int n = 0;
    double t0 = 0;
    double h = 1;
    EdgeRule rule = EdgeRule::Neumann;

    static AxisGrid make(double t0, double t1, int n, EdgeRule rule) {
        AxisGrid a;
        a.n = n;
        a.t0 = t0;
        a.rule = rule;
        a.h = (t1 - t0) / (rule == EdgeRule::Dirichlet ? n + 1 : n);
        return a;
    }
    // Coordinate of (possibly fractional) node index.
    double coord(double i) const {
        switch (rule) {
            case EdgeRule::Periodic: return t0 + i * h;
            case EdgeRule::Dirichlet: return t0 + (i + 1) * h;
            case EdgeRule::Neumann: return t0 + (i + 0.5) * h;
        }
        return t0;
    }
};

// Neighbour lookup result.
struct Link {
    enum Kind { Node, Zero, None } kind = None;
    int index = -1;
};

struct ParticleParams {
    double mass = 1.0;
    double charge = 0.0;

    void validate() const {
        if (!(mass > 0)) throw Error(ErrorKind::InvalidArgument, "mass must be positive");
        if (!std::isfinite(charge)) throw Error(ErrorKind::InvalidArgument, "charge must be finite");
    }
};

class SurfaceGrid {
public:
    static SurfaceGrid build(std::shared_ptr<const SurfaceChart> chart, int n_u, int n_v,
                             std::optional<EdgeRule> rule_u = std::nullopt,
                             std::optional<EdgeRule> rule_v = std::nullopt, double mass = 1.0) {
        if (n_u < 4 || n_v < 4) {
            throw Error(ErrorKind::GridTooCoarse, "grid needs n_u, n_v >= 4 (got " + std::to_string(n_u) + "x" +
                                                      std::to_string(n_v) + ")");
        }
        auto pick = [](bool periodic, std::optional<EdgeRule> r, const char* dir) {
            if (periodic) {
                if (r && *r != EdgeRule::Periodic) {
                    throw Error(ErrorKind::InvalidArgument, std::string("chart is periodic in ") + dir);
                }
                return EdgeRule::Periodic;
            }
            if (r && *r == EdgeRule::Periodic) {
                throw Error(ErrorKind::InvalidArgument, std::string("chart is not periodic in ") + dir);
            }
            return r.value_or(EdgeRule::Neumann);
        };
        SurfaceGrid g;
        g.chart_ = std::move(chart);
        g.mass_ = mass;
        const auto& d = g.chart_->domain;
        g.au_ = AxisGrid::make(d.u0, d.u1, n_u, pick(g.chart_->periodic_u, rule_u, "u"));
        g.av_ = AxisGrid::make(d.v0, d.v1, n_v, pick(g.chart_->periodic_v, rule_v, "v"));
        g.nodes_.reserve(static_cast<std::size_t>(n_u) * n_v);
        for (int j = 0; j < n_v; ++j) {
            for (int i = 0; i < n_u; ++i) {
                auto s = sample_geometry(*g.chart_, g.au_.coord(i), g.av_.coord(j), mass);
                if (!std::isfinite(s.M) || !std::isfinite(s.K_gauss)) {
                    throw Error(ErrorKind::DegenerateChart, "non-finite curvature on grid node");
                }
                g.nodes_.push_back(s);
            }
        }
        return g;
    }

    const SurfaceChart& chart() const { return *chart_; }
    std::shared_ptr<const SurfaceChart> chart_ptr() const { return chart_; }
    const AxisGrid& axis_u() const { return au_; }
    const AxisGrid& axis_v() const { return av_; }
    int n_u() const { return au_.n; }
    int n_v() const { return av_.n; }
    int size() const { return au_.n * av_.n; }
    double mass() const { return mass_; }
    int index(int i, int j) const { return j * au_.n + i; }
    const GeometrySample& node(int p) const { return nodes_[p]; }
    const std::vector<GeometrySample>& nodes() const { return nodes_; }

    // Node weight of the sqrt(g) inner product.
    double weight(int p) const { return nodes_[p].sqrt_g() * au_.h * av_.h; }

    // Neighbour of (i,j) displaced by di along u (dir 0) or v (dir 1).
    Link neighbor(int i, int j, int dir, int di) const {
        const AxisGrid& a = dir == 0 ? au_ : av_;
        int t = (dir == 0 ? i : j) + di;
        if (t < 0 || t >= a.n) {
            if (a.rule == EdgeRule::Periodic) {
                t = ((t % a.n) + a.n) % a.n;
            } else if (a.rule == EdgeRule::Dirichlet && (t == -1 || t == a.n)) {
                return {Link::Zero, -1};
            } else {
                return {Link::None, -1};
            }
        }
        return {Link::Node, dir == 0 ? index(t, j) : index(i, t)};
    }

    // Geometry at a fractional index position (faces, corners).
    GeometrySample sample_at(double fi, double fj) const {
        return sample_geometry(*chart_, au_.coord(fi), av_.coord(fj), mass_);
    }

    std::uint64_t hash() const {
        Fnv1a h;
        h.add(static_cast<std::size_t>(au_.n));
        h.add(static_cast<std::size_t>(av_.n));
        h.add(static_cast<std::size_t>(au_.rule));
        h.add(static_cast<std::size_t>(av_.rule));
        for (const auto& s : nodes_) {
            h.add(s.u);
            h.add(s.v);
            for (int k = 0; k < 3; ++k) h.add(s.position[k]);
        }
        return h.value();
    }

    double max_abs_M() const {
        double m = 0;
        for (const auto& s : nodes_) m = std::max(m, std::abs(s.M));
        return m;
    }

private:
    std::shared_ptr<const SurfaceChart> chart_;
    AxisGrid au_, av_;
    double mass_ = 1.0;
    std::vector<GeometrySample> nodes_;
};

inline std::vector<SurfaceFieldSample> sample_field(const SurfaceGrid& grid, const VectorPotentialField& field,
                                                    const DecomposeOptions& opt = {}) {
    std::vector<SurfaceFieldSample> out;
    out.reserve(grid.size());
    for (const auto& s : grid.nodes()) out.push_back(decompose_on_surface(field, s, opt));
    return out;
}

/// Covariant surface divergence d_a A^a + Gamma^b_{ab} A^a. The contravariant components are
/// differenced with 4th-order stencils (central in the interior and across periodic seams,
/// one-sided at open edges); the connection term comes from the chart jet, so nothing is
/// divided by a vanishing sqrt(g) near coordinate poles.
inline RVec surface_divergence_on_grid(const SurfaceGrid& grid, const std::vector<SurfaceFieldSample>& f) {
    const int nu = grid.n_u(), nv = grid.n_v();
    for (const AxisGrid* a : {&grid.axis_u(), &grid.axis_v()}) {
        if (a->rule != EdgeRule::Periodic && a->n < 5) {
            throw Error(ErrorKind::GridTooCoarse, "surface divergence needs 5 nodes along open directions");
        }
    }
    std::vector<double> comp_u(grid.size()), comp_v(grid.size());
    for (int p = 0; p < grid.size(); ++p) {
        comp_u[p] = f[p].A_par[0];
        comp_v[p] = f[p].A_par[1];
    }
    // First-derivative weights (/12h) at window offset 0, 1 and the centred 5-point stencil.
    static constexpr double kW[3][5] = {{-25, 48, -36, 16, -3}, {-3, -10, 18, -6, 1}, {1, -8, 0, 8, -1}};
    auto deriv = [&](const std::vector<double>& q, int i, int j, int dir) {
        const AxisGrid& a = dir == 0 ? grid.axis_u() : grid.axis_v();
        const int n = a.n;
        const int t = dir == 0 ? i : j;
        auto at = [&](int tt) {
            if (a.rule == EdgeRule::Periodic) tt = ((tt % n) + n) % n;
            return q[dir == 0 ? grid.index(tt, j) : grid.index(i, tt)];
        };
        double acc = 0;
        if (a.rule == EdgeRule::Periodic || (t >= 2 && t <= n - 3)) {
            for (int r = 0; r < 5; ++r) acc += kW[2][r] * at(t - 2 + r);
        } else if (t < 2) {
            for (int r = 0; r < 5; ++r) acc += kW[t][r] * at(r);
        } else {
            for (int r = 0; r < 5; ++r) acc -= kW[n - 1 - t][r] * at(n - 1 - r);
        }
        return acc / (12 * a.h);
    };
    RVec div(grid.size());
    for (int j = 0; j < nv; ++j) {
        for (int i = 0; i < nu; ++i) {
            const int p = grid.index(i, j);
            const auto& s = grid.node(p);
            const ChartJet jt = grid.chart().jet(s.u, s.v);
            const Vec3 r[2] = {jt.ru, jt.rv};
            const Vec3 rr[2][2] = {{jt.ruu, jt.ruv}, {jt.ruv, jt.rvv}};
            double conn = 0;
            for (int a = 0; a < 2; ++a) {
                double gam = 0;  // Gamma^b_{ab}
                for (int b = 0; b < 2; ++b)
                    for (int c = 0; c < 2; ++c) gam += s.g_inv(b, c) * r[c].dot(rr[a][b]);
                conn += gam * f[p].A_par[a];
            }
            div[p] = deriv(comp_u, i, j, 0) + deriv(comp_v, i, j, 1) + conn;
        }
    }
    return div;
}

// ---------------------------------------------------------------------------
// Slab: surface grid x transverse nodes. The transverse coordinate x3 is the one of
// offset_metric, i.e. the embedding X = r - x3 n.

enum class TransverseRule { Dirichlet, Neumann };

struct BoundaryCondition {
    enum class Kind { Dirichlet, NeumannConstraint } kind = Kind::Dirichlet;
    // (d3 - c_A i q A_3 + c_M M) chi = 0 on both faces.
    double c_A = 2.0;
    double c_M = 2.0;

    static BoundaryCondition dirichlet() { return {}; }
    static BoundaryCondition neumann(double cA = 2.0, double cM = 2.0) {
        return {Kind::NeumannConstraint, cA, cM};
    }
    std::string label() const {
        if (kind == Kind::Dirichlet) return "dirichlet";
        return "neumann(c_A=" + std::to_string(c_A) + ",c_M=" + std::to_string(c_M) + ")";
    }
    void validate() const {
        if (!std::isfinite(c_A) || !std::isfinite(c_M)) {
            throw Error(ErrorKind::InvalidArgument, "boundary coefficients must be finite");
        }
    }
};

class SlabGrid {
public:
    static constexpr double kMaxEpsM = 0.2;

    static SlabGrid build(SurfaceGrid surface, int n3, double eps, TransverseRule rule) {
        if (n3 < 4) throw Error(ErrorKind::GridTooCoarse, "slab needs n3 >= 4");
        if (!(eps > 0)) throw Error(ErrorKind::InvalidArgument, "slab half-thickness must be positive");
        if (eps * surface.max_abs_M() > kMaxEpsM) {
            throw Error(ErrorKind::ThickSlab, "eps*max|M| = " + std::to_string(eps * surface.max_abs_M()) +
                                                  " exceeds " + std::to_string(kMaxEpsM));
        }
        SlabGrid s;
        s.surface_ = std::move(surface);
        s.n3_ = n3;
        s.eps_ = eps;
        s.rule_ = rule;
        s.h3_ = rule == TransverseRule::Dirichlet ? 2 * eps / (n3 + 1) : 2 * eps / (n3 - 1);
        for (int k = 0; k < n3; ++k) {
            s.x3_.push_back(rule == TransverseRule::Dirichlet ? -eps + (k + 1) * s.h3_ : -eps + k * s.h3_);
            s.tw_.push_back(rule == TransverseRule::Neumann && (k == 0 || k == n3 - 1) ? 0.5 : 1.0);
        }
        for (const auto& n : s.surface_.nodes()) {
            for (double x : {-eps - s.h3_, eps + s.h3_, -eps, eps}) {
                if (!(xi_factor(n.M, n.K_gauss, x) > 0)) {
                    throw Error(ErrorKind::ThickSlab, "xi <= 0 inside the slab");
                }
            }
        }
        return s;
    }

    const SurfaceGrid& surface() const { return surface_; }
    int n3() const { return n3_; }
    int n_surface() const { return surface_.size(); }
    int size() const { return n3_ * surface_.size(); }
    double eps() const { return eps_; }
    double h3() const { return h3_; }
    TransverseRule rule() const { return rule_; }
    double x3(int k) const { return x3_[k]; }
    double transverse_weight(int k) const { return tw_[k]; }
    int index(int s, int k) const { return k * surface_.size() + s; }

    double xi(int s, double x3) const {
        const auto& n = surface_.node(s);
        return xi_factor(n.M, n.K_gauss, x3);
    }
    Vec3 position(int s, double x3) const {
        const auto& n = surface_.node(s);
        return n.position - x3 * n.normal;
    }
    // sqrt(g) measure weight of the chi inner product.
    double weight(int s, int k) const {
        return surface_.weight(s) * h3_ * tw_[k];
    }

    std::uint64_t hash() const {
        Fnv1a h;
        h.add(surface_.hash());
        h.add(static_cast<std::size_t>(n3_));
        h.add(eps_);
        h.add(static_cast<std::size_t>(rule_));
        return h.value();
    }

private:
    SurfaceGrid surface_;
    int n3_ = 0;
    double eps_ = 0, h3_ = 0;
    TransverseRule rule_ = TransverseRule::Dirichlet;
    std::vector<double> x3_, tw_;
};

}  // namespace thinwall
