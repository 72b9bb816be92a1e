#pragma once

// Static vector potentials, their decomposition relative to a surface, gauge
// transformations and steady line-current sources.
//
// Biot-Savart prefactor mu0/4pi is 1: A(r) = sum_segments I * int dl' / |r - r'|.

#include "thinwall/core.hpp"
#include "thinwall/geometry.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace thinwall {

enum class FieldKind { Analytic, BiotSavart, Superposition };

inline const char* to_string(FieldKind k) {
    switch (k) {
        case FieldKind::Analytic: return "analytic";
        case FieldKind::BiotSavart: return "biot_savart";
        case FieldKind::Superposition: return "superposition";
    }
    return "?";
}

struct VectorPotentialField {
    std::string label = "zero";
    FieldKind kind = FieldKind::Analytic;
    std::function<Vec3(const Vec3&)> A;
    std::function<double(const Vec3&)> A_t;  // scalar potential; V = -A_t. Empty means 0.

    Vec3 vector(const Vec3& x) const { return A ? A(x) : Vec3::Zero(); }
    double scalar(const Vec3& x) const { return A_t ? A_t(x) : 0.0; }
};

// ---------------------------------------------------------------------------
// Ambient finite-difference probes (4th-order central, step h).

inline double ambient_divergence(const VectorPotentialField& f, const Vec3& x, double h = 1e-3) {
    double div = 0;
    for (int i = 0; i < 3; ++i) {
        const Vec3 e = Vec3::Unit(i) * h;
        div += (f.vector(x - 2 * e)[i] - 8 * f.vector(x - e)[i] + 8 * f.vector(x + e)[i] - f.vector(x + 2 * e)[i]) /
               (12 * h);
    }
    return div;
}

inline Eigen::Matrix3d ambient_jacobian(const VectorPotentialField& f, const Vec3& x, double h = 1e-3) {
    Eigen::Matrix3d J;  // J(i,j) = dA_i/dx_j
    for (int j = 0; j < 3; ++j) {
        const Vec3 e = Vec3::Unit(j) * h;
        J.col(j) = (f.vector(x - 2 * e) - 8 * f.vector(x - e) + 8 * f.vector(x + e) - f.vector(x + 2 * e)) / (12 * h);
    }
    return J;
}

inline Vec3 ambient_curl(const VectorPotentialField& f, const Vec3& x, double h = 1e-3) {
    const Eigen::Matrix3d J = ambient_jacobian(f, x, h);
    return {J(2, 1) - J(1, 2), J(0, 2) - J(2, 0), J(1, 0) - J(0, 1)};
}

// ---------------------------------------------------------------------------
// Analytic presets.

namespace fields {

inline VectorPotentialField zero() { return {}; }

inline VectorPotentialField uniform(const Vec3& a) {
    VectorPotentialField f;
    f.label = "uniform";
    f.A = [a](const Vec3&) { return a; };
    return f;
}

// A = (0, 0, a z); ambient divergence a everywhere.
inline VectorPotentialField linear_z(double a) {
    VectorPotentialField f;
    f.label = "linear_z";
    f.A = [a](const Vec3& x) { return Vec3(0, 0, a * x.z()); };
    return f;
}

// Infinite straight wire through `point` along `direction`: A = -2 I ln(rho) d.
inline VectorPotentialField wire(const Vec3& point, const Vec3& direction, double current) {
    const Vec3 d = direction.normalized();
    VectorPotentialField f;
    f.label = "wire";
    f.A = [point, d, current](const Vec3& x) {
        const Vec3 rel = x - point;
        const double rho = (rel - rel.dot(d) * d).norm();
        return Vec3(-2.0 * current * std::log(rho) * d);
    };
    return f;
}

// Flux-tube potential around the line through `point` along `direction`:
// A = s * rho0 * phi_hat / rho, so |A| = s on the coaxial cylinder of radius rho0.
// Divergence- and curl-free away from the line.
inline VectorPotentialField azimuthal(double s, double rho0 = 1.0, const Vec3& point = Vec3::Zero(),
                                      const Vec3& direction = Vec3::UnitZ()) {
    const Vec3 d = direction.normalized();
    VectorPotentialField f;
    f.label = "azimuthal";
    f.A = [s, rho0, point, d](const Vec3& x) {
        const Vec3 rel = x - point;
        const Vec3 perp = rel - rel.dot(d) * d;
        const double rho2 = perp.squaredNorm();
        return Vec3(s * rho0 * d.cross(perp) / rho2);
    };
    return f;
}

inline VectorPotentialField scaled(const VectorPotentialField& base, double s) {
    VectorPotentialField f;
    f.label = base.label + "*" + std::to_string(s);
    f.kind = base.kind;
    f.A = [base, s](const Vec3& x) { return Vec3(s * base.vector(x)); };
    if (base.A_t) f.A_t = [base, s](const Vec3& x) { return s * base.scalar(x); };
    return f;
}

inline VectorPotentialField superpose(const std::vector<VectorPotentialField>& terms) {
    VectorPotentialField f;
    f.kind = FieldKind::Superposition;
    f.label = "superposition(";
    for (std::size_t i = 0; i < terms.size(); ++i) f.label += (i ? "," : "") + terms[i].label;
    f.label += ")";
    // Fixed summation order.
    f.A = [terms](const Vec3& x) {
        Vec3 acc = Vec3::Zero();
        for (const auto& t : terms) acc += t.vector(x);
        return acc;
    };
    f.A_t = [terms](const Vec3& x) {
        double acc = 0;
        for (const auto& t : terms) acc += t.scalar(x);
        return acc;
    };
    return f;
}

}  // namespace fields

// ---------------------------------------------------------------------------
// Steady line currents.

struct CurrentSource {
    std::vector<Vec3> polyline;
    double current = 1.0;
    bool closed = false;

    // Segment list; a closed loop whose last point repeats the first is not double counted.
    std::vector<std::pair<Vec3, Vec3>> segments() const {
        std::vector<std::pair<Vec3, Vec3>> out;
        for (std::size_t i = 0; i + 1 < polyline.size(); ++i) out.emplace_back(polyline[i], polyline[i + 1]);
        if (closed && polyline.size() > 2 && (polyline.front() - polyline.back()).norm() > 0) {
            out.emplace_back(polyline.back(), polyline.front());
        }
        return out;
    }

    void validate() const {
        if (polyline.size() < 2) throw Error(ErrorKind::InvalidArgument, "current source needs >= 2 points");
        for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
            if ((polyline[i + 1] - polyline[i]).norm() == 0.0) {
                throw Error(ErrorKind::InvalidArgument, "current source has repeated consecutive points");
            }
        }
    }
};

namespace detail {

// Gauss-Legendre nodes/weights on [0, 1].
struct GaussLegendre {
    std::vector<double> x, w;
    explicit GaussLegendre(int n) : x(n), w(n) {
        for (int i = 0; i < n; ++i) {
            double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
            double dp = 0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1, p1 = z;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                if (n == 1) { p1 = z; p0 = 1; }
                dp = n * (z * p1 - p0) / (z * z - 1);
                const double dz = p1 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) break;
            }
            x[i] = 0.5 * (1 - z);
            w[i] = 1.0 / ((1 - z * z) * dp * dp);
        }
    }
};

inline double point_segment_distance(const Vec3& r, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double t = std::clamp((r - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (r - (a + t * ab)).norm();
}

// int_0^1 dt / |r - (a + t (b - a))|, panels split until length <= distance.
inline double segment_kernel(const Vec3& r, const Vec3& a, const Vec3& b, const GaussLegendre& gl, int depth = 0) {
    const double L = (b - a).norm();
    const double d = point_segment_distance(r, a, b);
    if (L > d && depth < 60) {
        const Vec3 m = 0.5 * (a + b);
        return 0.5 * (segment_kernel(r, a, m, gl, depth + 1) + segment_kernel(r, m, b, gl, depth + 1));
    }
    double acc = 0;
    for (std::size_t i = 0; i < gl.x.size(); ++i) acc += gl.w[i] / (r - (a + gl.x[i] * (b - a))).norm();
    return acc;
}

}  // namespace detail

inline VectorPotentialField biot_savart_potential(const std::vector<CurrentSource>& sources, int quadrature_n) {
    if (quadrature_n < 2) throw Error(ErrorKind::InvalidArgument, "quadrature_n must be >= 2");
    struct Seg {
        Vec3 a, b;
        double I;
    };
    auto segs = std::make_shared<std::vector<Seg>>();
    for (const auto& s : sources) {
        s.validate();
        for (const auto& [a, b] : s.segments()) segs->push_back({a, b, s.current});
    }
    auto gl = std::make_shared<detail::GaussLegendre>(quadrature_n);
    VectorPotentialField f;
    f.kind = FieldKind::BiotSavart;
    f.label = "biot_savart(" + std::to_string(segs->size()) + " segments)";
    f.A = [segs, gl](const Vec3& r) {
        Vec3 acc = Vec3::Zero();
        for (const auto& s : *segs) acc += s.I * detail::segment_kernel(r, s.a, s.b, *gl) * (s.b - s.a);
        return acc;
    };
    return f;
}

namespace fields {

inline CurrentSource circle_source(const Vec3& center, double radius, const Vec3& normal, double current,
                                   int segments = 128) {
    const Vec3 nz = normal.normalized();
    const Vec3 helper = std::abs(nz.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 e1 = (helper - helper.dot(nz) * nz).normalized();
    const Vec3 e2 = nz.cross(e1);
    CurrentSource s;
    s.current = current;
    s.closed = true;
    for (int i = 0; i < segments; ++i) {
        const double t = 2 * kPi * i / segments;
        s.polyline.push_back(center + radius * (std::cos(t) * e1 + std::sin(t) * e2));
    }
    return s;
}

inline VectorPotentialField loop(const Vec3& center, double radius, const Vec3& normal, double current,
                                 int segments = 128, int quadrature_n = 8) {
    auto f = biot_savart_potential({circle_source(center, radius, normal, current, segments)}, quadrature_n);
    f.label = "loop";
    return f;
}

inline VectorPotentialField solenoid(const Vec3& center, const Vec3& axis, double radius, double length,
                                     int n_turns, double current, int segments = 64, int quadrature_n = 8) {
    std::vector<CurrentSource> loops;
    const Vec3 d = axis.normalized();
    for (int k = 0; k < n_turns; ++k) {
        const double z = n_turns == 1 ? 0.0 : -0.5 * length + length * k / (n_turns - 1);
        loops.push_back(circle_source(center + z * d, radius, d, current, segments));
    }
    auto f = biot_savart_potential(loops, quadrature_n);
    f.label = "solenoid";
    return f;
}

}  // namespace fields

// CSV polyline (columns x,y,z) plus JSON sidecar {"current": I, "closed": bool}.
inline CurrentSource read_current_source(const std::string& csv_path, const std::string& sidecar_path) {
    std::ifstream in(csv_path);
    if (!in) throw Error(ErrorKind::Io, "cannot open source CSV '" + csv_path + "'");
    std::string line;
    std::getline(in, line);
    if (detail::split_csv_line(line) != std::vector<std::string>{"x", "y", "z"}) {
        throw Error(ErrorKind::Config, "source CSV header must be x,y,z");
    }
    CurrentSource s;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto c = detail::split_csv_line(line);
        if (c.size() != 3) throw Error(ErrorKind::Config, "source CSV row needs 3 columns: " + line);
        s.polyline.emplace_back(std::stod(c[0]), std::stod(c[1]), std::stod(c[2]));
    }
    std::ifstream js(sidecar_path);
    if (!js) throw Error(ErrorKind::Io, "cannot open source sidecar '" + sidecar_path + "'");
    const auto j = nlohmann::json::parse(js);
    for (const auto& [key, _] : j.items()) {
        if (key != "current" && key != "closed") throw Error(ErrorKind::Config, "unknown sidecar key '" + key + "'");
    }
    s.current = j.at("current").get<double>();
    s.closed = j.value("closed", false);
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Gauge transformations.

struct GaugeFunction {
    std::function<double(const Vec3&)> f;
    std::function<Vec3(const Vec3&)> grad_f;
};

inline GaugeFunction make_gauge_fd(std::function<double(const Vec3&)> f, double h = 1e-4) {
    GaugeFunction g;
    g.f = f;
    g.grad_f = [f, h](const Vec3& x) {
        Vec3 out;
        for (int i = 0; i < 3; ++i) {
            const Vec3 e = Vec3::Unit(i) * h;
            out[i] = (f(x - 2 * e) - 8 * f(x - e) + 8 * f(x + e) - f(x + 2 * e)) / (12 * h);
        }
        return out;
    };
    return g;
}

/// A' = A + grad f; A_t unchanged (static f).
inline VectorPotentialField gauge_transform(const VectorPotentialField& field, const GaugeFunction& gauge) {
    VectorPotentialField out;
    out.label = "gauge(" + field.label + ")";
    out.kind = field.kind;
    out.A = [field, gauge](const Vec3& x) { return Vec3(field.vector(x) + gauge.grad_f(x)); };
    out.A_t = field.A_t;
    return out;
}

// ---------------------------------------------------------------------------
// Decomposition on the surface.

struct SurfaceFieldSample {
    Vec3 A = Vec3::Zero();                         // ambient value
    Eigen::Vector2d A_par_cov = Eigen::Vector2d::Zero();  // A_a = A . r_a
    Eigen::Vector2d A_par = Eigen::Vector2d::Zero();      // A^a = g^{ab} A_b
    double A3 = 0;       // A . n
    double dA3_dx3 = 0;  // normal derivative of A . n with n held fixed
    double div3 = 0;     // ambient divergence

    Vec3 reconstruct(const GeometrySample& s) const {
        return A_par[0] * s.tangent_u + A_par[1] * s.tangent_v + A3 * s.normal;
    }
};

struct DecomposeOptions {
    double normal_delta = 1e-5;  // symmetric off-surface step for dA3/dx3
    double div_delta = 1e-3;     // ambient divergence step (4th order)
};

inline SurfaceFieldSample decompose_on_surface(const VectorPotentialField& field, const GeometrySample& s,
                                               const DecomposeOptions& opt = {}) {
    SurfaceFieldSample out;
    out.A = field.vector(s.position);
    if (!out.A.allFinite()) {
        throw Error(ErrorKind::SourceOnSurface, "field '" + field.label + "' is not finite at surface point (" +
                                                    std::to_string(s.u) + "," + std::to_string(s.v) + ")");
    }
    out.A_par_cov << out.A.dot(s.tangent_u), out.A.dot(s.tangent_v);
    out.A_par = s.g_inv * out.A_par_cov;
    out.A3 = out.A.dot(s.normal);
    const double d = opt.normal_delta;
    const Vec3 ap = field.vector(s.position + d * s.normal);
    const Vec3 am = field.vector(s.position - d * s.normal);
    out.dA3_dx3 = (ap - am).dot(s.normal) / (2 * d);
    out.div3 = ambient_divergence(field, s.position, opt.div_delta);
    if (!std::isfinite(out.dA3_dx3) || !std::isfinite(out.div3)) {
        throw Error(ErrorKind::SourceOnSurface, "field '" + field.label + "' is not finite near the surface");
    }
    return out;
}

/// grad_par . A_par + d3 A^3 + 2 A^3 (M/2). Equals the ambient divergence on the surface.
inline double surface_divergence_identity(const SurfaceFieldSample& f, const GeometrySample& s,
                                          double surface_div_Apar) {
    return surface_div_Apar + f.dA3_dx3 + 2.0 * f.A3 * (0.5 * s.M);
}

/// Static Lorentz-gauge residual; zero iff div A = 0 at the sample.
inline double lorentz_residual(const VectorPotentialField& field, const GeometrySample& s, double surface_div_Apar,
                               const DecomposeOptions& opt = {}) {
    return surface_divergence_identity(decompose_on_surface(field, s, opt), s, surface_div_Apar);
}

}  // namespace thinwall
