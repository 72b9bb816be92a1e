#pragma once

// Differential geometry of parametrized surface patches and the near-surface
// expansion of the embedding metric.
//
// Curvature convention: M is the TRACE of the shape operator g^{ab} K_ab
// (twice the averaged mean curvature), K_gauss = det(g^{-1} K). Wherever the
// averaged value is needed the code uses M/2 explicitly. K_ab = -n . r_ab with
// n = (r_u x r_v)/|r_u x r_v|, so a sphere with outward normal has M = +2/R.

#include "thinwall/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace thinwall {

enum class DerivativeMode { Analytic, FiniteDifference };

struct ChartJet {
    Vec3 r, ru, rv, ruu, ruv, rvv;
};

struct ParamDomain {
    double u0 = 0, u1 = 1, v0 = 0, v1 = 1;
    double span_u() const { return u1 - u0; }
    double span_v() const { return v1 - v0; }
};

struct SurfaceChart {
    std::string name;
    std::function<Vec3(double, double)> map;
    // Analytic position + first and second derivatives; empty for user charts.
    std::function<ChartJet(double, double)> analytic_jet;
    ParamDomain domain;
    bool periodic_u = false;
    bool periodic_v = false;
    DerivativeMode mode = DerivativeMode::FiniteDifference;
    // FD step as a fraction of the domain span.
    double h_geom = 1e-4;

    ChartJet jet(double u, double v) const;
};

namespace detail {

// 4th-order central stencils, offsets -2..2.
inline constexpr std::array<double, 5> kD1 = {1.0, -8.0, 0.0, 8.0, -1.0};        // / 12h
inline constexpr std::array<double, 5> kD2 = {-1.0, 16.0, -30.0, 16.0, -1.0};    // / 12h^2

template <class F>
auto fd_d1(const F& f, double x, double h) {
    return (kD1[0] * f(x - 2 * h) + kD1[1] * f(x - h) + kD1[3] * f(x + h) + kD1[4] * f(x + 2 * h)) /
           (12.0 * h);
}

template <class F>
auto fd_d2(const F& f, double x, double h) {
    return (kD2[0] * f(x - 2 * h) + kD2[1] * f(x - h) + kD2[2] * f(x) + kD2[3] * f(x + h) +
            kD2[4] * f(x + 2 * h)) /
           (12.0 * h * h);
}

// Mixed derivative as the tensor product of two first-derivative stencils.
template <class F>
auto fd_mixed(const F& f, double u, double v, double hu, double hv) {
    using R = decltype(f(u, v));
    R acc = f(u, v) * 0.0;
    for (int i = 0; i < 5; ++i) {
        if (kD1[i] == 0.0) continue;
        for (int j = 0; j < 5; ++j) {
            if (kD1[j] == 0.0) continue;
            acc += (kD1[i] * kD1[j]) * f(u + (i - 2) * hu, v + (j - 2) * hv);
        }
    }
    return R(acc / (144.0 * hu * hv));
}

}  // namespace detail

inline ChartJet SurfaceChart::jet(double u, double v) const {
    if (mode == DerivativeMode::Analytic && analytic_jet) return analytic_jet(u, v);
    const double hu = h_geom * domain.span_u();
    const double hv = h_geom * domain.span_v();
    auto fu = [&](double x) -> Vec3 { return map(x, v); };
    auto fv = [&](double y) -> Vec3 { return map(u, y); };
    ChartJet j;
    j.r = map(u, v);
    j.ru = detail::fd_d1(fu, u, hu);
    j.rv = detail::fd_d1(fv, v, hv);
    j.ruu = detail::fd_d2(fu, u, hu);
    j.rvv = detail::fd_d2(fv, v, hv);
    j.ruv = detail::fd_mixed(map, u, v, hu, hv);
    return j;
}

struct GeometrySample {
    double u = 0, v = 0;
    Vec3 position = Vec3::Zero();
    Vec3 tangent_u = Vec3::Zero();
    Vec3 tangent_v = Vec3::Zero();
    Vec3 normal = Vec3::Zero();
    Mat2 g = Mat2::Identity();
    Mat2 g_inv = Mat2::Identity();
    double det_g = 1;
    Mat2 K_ext = Mat2::Zero();
    double M = 0;        // trace convention, 1/length
    double K_gauss = 0;  // 1/length^2
    double V0 = 0;       // geometric potential for the mass used at sampling

    double sqrt_g() const { return std::sqrt(det_g); }
    // Shape operator S^a_b = g^{ac} K_cb.
    Mat2 shape() const { return g_inv * K_ext; }
};

inline constexpr double kDegenerateDetTol = 1e-14;

inline void check_in_domain(const SurfaceChart& chart, double u, double v) {
    const auto& d = chart.domain;
    const double tu = 1e-9 * d.span_u(), tv = 1e-9 * d.span_v();
    if (u < d.u0 - tu || u > d.u1 + tu || v < d.v0 - tv || v > d.v1 + tv) {
        std::ostringstream os;
        os << "(u,v)=(" << u << "," << v << ") outside domain of chart '" << chart.name << "'";
        throw Error(ErrorKind::InvalidArgument, os.str());
    }
}

/// Geometric potential V0 = -(1/2m)((M/2)^2 - K) for trace-convention M.
inline double geometric_potential(double M, double K_gauss, double mass) {
    if (!(mass > 0)) throw Error(ErrorKind::InvalidArgument, "mass must be positive");
    const double H = 0.5 * M;
    return -(H * H - K_gauss) / (2.0 * mass);
}

inline double geometric_potential(const GeometrySample& s, double mass) {
    return geometric_potential(s.M, s.K_gauss, mass);
}

inline GeometrySample sample_from_jet(const ChartJet& j, double u, double v, double mass,
                                      const std::string& chart_name = "") {
    GeometrySample s;
    s.u = u;
    s.v = v;
    s.position = j.r;
    s.tangent_u = j.ru;
    s.tangent_v = j.rv;
    s.g << j.ru.dot(j.ru), j.ru.dot(j.rv), j.rv.dot(j.ru), j.rv.dot(j.rv);
    s.det_g = s.g.determinant();
    if (!(s.det_g > kDegenerateDetTol)) {
        std::ostringstream os;
        os << "det g = " << s.det_g << " at (u,v)=(" << u << "," << v << ")";
        if (!chart_name.empty()) os << " on chart '" << chart_name << "'";
        throw Error(ErrorKind::DegenerateChart, os.str());
    }
    s.g_inv = s.g.inverse();
    const Vec3 c = j.ru.cross(j.rv);
    s.normal = c / c.norm();
    s.K_ext << -s.normal.dot(j.ruu), -s.normal.dot(j.ruv), -s.normal.dot(j.ruv), -s.normal.dot(j.rvv);
    const Mat2 S = s.g_inv * s.K_ext;
    s.M = S.trace();
    // Trace cancellation below roundoff of the principal curvatures is a minimal surface.
    if (std::abs(s.M) <= 1e-13 * S.norm()) s.M = 0.0;
    s.K_gauss = S.determinant();
    s.V0 = geometric_potential(s.M, s.K_gauss, mass);
    return s;
}

inline GeometrySample sample_geometry(const SurfaceChart& chart, double u, double v, double mass = 1.0) {
    check_in_domain(chart, u, v);
    return sample_from_jet(chart.jet(u, v), u, v, mass, chart.name);
}

/// Measure ratio sqrt(G)/sqrt(g) = 1 - 2(M/2) x3 + K x3^2.
inline double xi_factor(double M, double K_gauss, double x3) {
    return 1.0 - M * x3 + K_gauss * x3 * x3;
}

inline double xi_factor(const GeometrySample& s, double x3, const WarningSink* sink = nullptr) {
    if (std::abs(x3 * s.M) > 0.5) {
        warn(sink, "xi_factor: |x3*M| = " + std::to_string(std::abs(x3 * s.M)) +
                       " exceeds 0.5, outside the thin-wall regime");
    }
    return xi_factor(s.M, s.K_gauss, x3);
}

/// d xi / d x3.
inline double xi_derivative(double M, double K_gauss, double x3) { return -M + 2.0 * K_gauss * x3; }

/// G_ab(x3) = g_ab - 2 K_ab x3 + K^k_a g_km K^m_b x3^2.
inline Mat2 offset_metric(const GeometrySample& s, double x3, const WarningSink* sink = nullptr) {
    if (std::abs(x3 * s.M) > 0.5) {
        warn(sink, "offset_metric: |x3*M| exceeds 0.5, outside the thin-wall regime");
    }
    const Mat2 KgK = s.K_ext * s.g_inv * s.K_ext;
    return s.g - 2.0 * x3 * s.K_ext + (x3 * x3) * KgK;
}

/// Gaussian curvature from the first fundamental form only (Brioschi formula).
/// Metric derivatives use 4th-order central differences of the first-derivative metric.
inline double intrinsic_gauss_curvature(const SurfaceChart& chart, double u, double v) {
    check_in_domain(chart, u, v);
    auto metric = [&](double a, double b) -> Eigen::Vector3d {
        Vec3 ru, rv;
        if (chart.mode == DerivativeMode::Analytic && chart.analytic_jet) {
            const ChartJet j = chart.analytic_jet(a, b);
            ru = j.ru;
            rv = j.rv;
        } else {
            const double hu = chart.h_geom * chart.domain.span_u();
            const double hv = chart.h_geom * chart.domain.span_v();
            ru = detail::fd_d1([&](double x) -> Vec3 { return chart.map(x, b); }, a, hu);
            rv = detail::fd_d1([&](double y) -> Vec3 { return chart.map(a, y); }, b, hv);
        }
        return {ru.dot(ru), ru.dot(rv), rv.dot(rv)};
    };
    const double hu = 1e-3 * chart.domain.span_u();
    const double hv = 1e-3 * chart.domain.span_v();
    auto along_u = [&](double x) -> Eigen::Vector3d { return metric(x, v); };
    auto along_v = [&](double y) -> Eigen::Vector3d { return metric(u, y); };

    const Eigen::Vector3d m = metric(u, v);
    const Eigen::Vector3d mu = detail::fd_d1(along_u, u, hu);
    const Eigen::Vector3d mv = detail::fd_d1(along_v, v, hv);
    const Eigen::Vector3d muu = detail::fd_d2(along_u, u, hu);
    const Eigen::Vector3d mvv = detail::fd_d2(along_v, v, hv);
    const Eigen::Vector3d muv = detail::fd_mixed(metric, u, v, hu, hv);

    const double E = m[0], F = m[1], G = m[2];
    const double Eu = mu[0], Fu = mu[1], Gu = mu[2];
    const double Ev = mv[0], Fv = mv[1], Gv = mv[2];
    const double Evv = mvv[0], Guu = muu[2], Fuv = muv[1];
    const double W = E * G - F * F;
    if (!(W > kDegenerateDetTol)) {
        throw Error(ErrorKind::DegenerateChart, "det g = " + std::to_string(W) + " in Brioschi evaluation");
    }
    Eigen::Matrix3d A, B;
    A << -0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev,
         Fv - 0.5 * Gu, E, F,
         0.5 * Gv, F, G;
    B << 0.0, 0.5 * Ev, 0.5 * Gu,
         0.5 * Ev, E, F,
         0.5 * Gu, F, G;
    return (A.determinant() - B.determinant()) / (W * W);
}

/// Throws InvalidArgument when periodic flags disagree with the map.
inline void validate_periodicity(const SurfaceChart& chart, double tol = 1e-12) {
    const auto& d = chart.domain;
    for (int k = 0; k <= 8; ++k) {
        const double t = k / 8.0;
        if (chart.periodic_u) {
            const double v = d.v0 + t * d.span_v();
            const Vec3 a = chart.map(d.u0, v), b = chart.map(d.u1, v);
            if ((a - b).norm() > tol * std::max(1.0, a.norm())) {
                throw Error(ErrorKind::InvalidArgument, "chart '" + chart.name + "' is not periodic in u");
            }
        }
        if (chart.periodic_v) {
            const double u = d.u0 + t * d.span_u();
            const Vec3 a = chart.map(u, d.v0), b = chart.map(u, d.v1);
            if ((a - b).norm() > tol * std::max(1.0, a.norm())) {
                throw Error(ErrorKind::InvalidArgument, "chart '" + chart.name + "' is not periodic in v");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Presets. All use analytic derivatives; normals point outward on closed surfaces.

namespace presets {

inline SurfaceChart plane(double Lx = kPi, double Ly = kPi) {
    SurfaceChart c;
    c.name = "plane";
    c.domain = {0.0, Lx, 0.0, Ly};
    c.map = [](double u, double v) { return Vec3(u, v, 0.0); };
    c.analytic_jet = [](double u, double v) {
        return ChartJet{Vec3(u, v, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
    };
    c.mode = DerivativeMode::Analytic;
    return c;
}

// u = azimuth (periodic), v = axial coordinate in [0, L].
inline SurfaceChart cylinder(double R, double L) {
    SurfaceChart c;
    c.name = "cylinder";
    c.domain = {0.0, 2 * kPi, 0.0, L};
    c.periodic_u = true;
    c.map = [R](double u, double v) { return Vec3(R * std::cos(u), R * std::sin(u), v); };
    c.analytic_jet = [R](double u, double v) {
        const double cu = std::cos(u), su = std::sin(u);
        return ChartJet{Vec3(R * cu, R * su, v), Vec3(-R * su, R * cu, 0), Vec3(0, 0, 1),
                        Vec3(-R * cu, -R * su, 0), Vec3::Zero(), Vec3::Zero()};
    };
    c.mode = DerivativeMode::Analytic;
    return c;
}

// u = colatitude in [margin, pi - margin], v = azimuth (periodic).
inline SurfaceChart sphere(double R, double pole_margin = 1e-3) {
    SurfaceChart c;
    c.name = "sphere";
    c.domain = {pole_margin, kPi - pole_margin, 0.0, 2 * kPi};
    c.periodic_v = true;
    c.map = [R](double u, double v) {
        return Vec3(R * std::sin(u) * std::cos(v), R * std::sin(u) * std::sin(v), R * std::cos(u));
    };
    c.analytic_jet = [R](double u, double v) {
        const double su = std::sin(u), cu = std::cos(u), sv = std::sin(v), cv = std::cos(v);
        ChartJet j;
        j.r = R * Vec3(su * cv, su * sv, cu);
        j.ru = R * Vec3(cu * cv, cu * sv, -su);
        j.rv = R * Vec3(-su * sv, su * cv, 0);
        j.ruu = -j.r;
        j.ruv = R * Vec3(-cu * sv, cu * cv, 0);
        j.rvv = R * Vec3(-su * cv, -su * sv, 0);
        return j;
    };
    c.mode = DerivativeMode::Analytic;
    return c;
}

// u = toroidal angle, v = poloidal angle (v = 0 on the outer equator).
inline SurfaceChart torus(double R, double r) {
    SurfaceChart c;
    c.name = "torus";
    c.domain = {0.0, 2 * kPi, 0.0, 2 * kPi};
    c.periodic_u = c.periodic_v = true;
    c.map = [R, r](double u, double v) {
        const double rho = R + r * std::cos(v);
        return Vec3(rho * std::cos(u), rho * std::sin(u), r * std::sin(v));
    };
    c.analytic_jet = [R, r](double u, double v) {
        const double cu = std::cos(u), su = std::sin(u), cv = std::cos(v), sv = std::sin(v);
        const double rho = R + r * cv;
        ChartJet j;
        j.r = Vec3(rho * cu, rho * su, r * sv);
        j.ru = Vec3(-rho * su, rho * cu, 0);
        j.rv = Vec3(-r * sv * cu, -r * sv * su, r * cv);
        j.ruu = Vec3(-rho * cu, -rho * su, 0);
        j.ruv = Vec3(r * sv * su, -r * sv * cu, 0);
        j.rvv = Vec3(-r * cv * cu, -r * cv * su, -r * sv);
        return j;
    };
    c.mode = DerivativeMode::Analytic;
    return c;
}

// (a cosh(v/a) cos u, a cosh(v/a) sin u, v), v in [-vmax, vmax].
inline SurfaceChart catenoid(double a, double vmax) {
    SurfaceChart c;
    c.name = "catenoid";
    c.domain = {0.0, 2 * kPi, -vmax, vmax};
    c.periodic_u = true;
    c.map = [a](double u, double v) {
        const double ch = std::cosh(v / a);
        return Vec3(a * ch * std::cos(u), a * ch * std::sin(u), v);
    };
    c.analytic_jet = [a](double u, double v) {
        const double ch = std::cosh(v / a), sh = std::sinh(v / a);
        const double cu = std::cos(u), su = std::sin(u);
        ChartJet j;
        j.r = Vec3(a * ch * cu, a * ch * su, v);
        j.ru = Vec3(-a * ch * su, a * ch * cu, 0);
        j.rv = Vec3(sh * cu, sh * su, 1);
        j.ruu = Vec3(-a * ch * cu, -a * ch * su, 0);
        j.ruv = Vec3(-sh * su, sh * cu, 0);
        j.rvv = Vec3(ch * cu / a, ch * su / a, 0);
        return j;
    };
    c.mode = DerivativeMode::Analytic;
    return c;
}

// (v cos u, v sin u, a u), u in [0, 2 pi] (not periodic), v in [-vmax, vmax].
inline SurfaceChart helicoid(double a, double vmax) {
    SurfaceChart c;
    c.name = "helicoid";
    c.domain = {0.0, 2 * kPi, -vmax, vmax};
    c.map = [a](double u, double v) { return Vec3(v * std::cos(u), v * std::sin(u), a * u); };
    c.analytic_jet = [a](double u, double v) {
        const double cu = std::cos(u), su = std::sin(u);
        ChartJet j;
        j.r = Vec3(v * cu, v * su, a * u);
        j.ru = Vec3(-v * su, v * cu, a);
        j.rv = Vec3(cu, su, 0);
        j.ruu = Vec3(-v * cu, -v * su, 0);
        j.ruv = Vec3(-su, cu, 0);
        j.rvv = Vec3::Zero();
        return j;
    };
    c.mode = DerivativeMode::Analytic;
    return c;
}

}  // namespace presets

// ---------------------------------------------------------------------------
// Tabulated charts: CSV with columns u,v,x,y,z on a uniform tensor grid.
// Positions are interpolated with local 6-point Lagrange polynomials in each
// direction; all derivatives are finite differences of the interpolant.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        cell.erase(0, cell.find_first_not_of(" \t\r"));
        cell.erase(cell.find_last_not_of(" \t\r") + 1);
        out.push_back(cell);
    }
    return out;
}

// Lagrange weights for nodes 0..n-1 at fractional position t (node units).
inline std::array<double, 6> lagrange6(double t) {
    std::array<double, 6> w{};
    for (int i = 0; i < 6; ++i) {
        double p = 1.0;
        for (int j = 0; j < 6; ++j)
            if (j != i) p *= (t - j) / double(i - j);
        w[i] = p;
    }
    return w;
}

struct Axis {
    double t0 = 0, dt = 1;
    int n = 0;
    bool periodic = false;

    // First stencil index and local coordinate for a 6-point window.
    std::pair<int, double> window(double t) const {
        const double x = (t - t0) / dt;
        int start = static_cast<int>(std::floor(x)) - 2;
        if (!periodic) start = std::clamp(start, 0, n - 6);
        return {start, x - start};
    }
    int wrap(int i) const {
        if (!periodic) return i;
        return ((i % n) + n) % n;
    }
};

}  // namespace detail

inline SurfaceChart chart_from_csv(const std::string& path, bool periodic_u, bool periodic_v,
                                   const std::string& name = "tabulated") {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open chart CSV '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::Config, "empty chart CSV '" + path + "'");
    const auto header = detail::split_csv_line(line);
    const std::vector<std::string> expect = {"u", "v", "x", "y", "z"};
    if (header != expect) throw Error(ErrorKind::Config, "chart CSV header must be u,v,x,y,z");

    std::map<std::pair<double, double>, Vec3> pts;
    std::vector<double> us, vs;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 5) throw Error(ErrorKind::Config, "chart CSV row needs 5 columns: " + line);
        double val[5];
        for (int i = 0; i < 5; ++i) val[i] = std::stod(cells[i]);
        pts[{val[0], val[1]}] = Vec3(val[2], val[3], val[4]);
        us.push_back(val[0]);
        vs.push_back(val[1]);
    }
    auto uniq = [](std::vector<double>& x) {
        std::sort(x.begin(), x.end());
        x.erase(std::unique(x.begin(), x.end()), x.end());
    };
    uniq(us);
    uniq(vs);
    if (us.size() < 6 || vs.size() < 6) throw Error(ErrorKind::Config, "chart CSV needs at least 6 nodes per direction");
    if (pts.size() != us.size() * vs.size()) throw Error(ErrorKind::Config, "chart CSV is not a full tensor grid");
    auto make_axis = [](const std::vector<double>& x, bool periodic) {
        detail::Axis a;
        a.t0 = x.front();
        a.n = static_cast<int>(x.size());
        a.dt = (x.back() - x.front()) / (a.n - 1);
        a.periodic = periodic;
        for (int i = 0; i < a.n; ++i) {
            if (std::abs(x[i] - (a.t0 + i * a.dt)) > 1e-9 * std::max(1.0, std::abs(a.dt) * a.n)) {
                throw Error(ErrorKind::Config, "chart CSV grid spacing must be uniform");
            }
        }
        return a;
    };
    const auto au = make_axis(us, periodic_u);
    const auto av = make_axis(vs, periodic_v);
    auto table = std::make_shared<std::vector<Vec3>>(us.size() * vs.size());
    for (std::size_t j = 0; j < vs.size(); ++j)
        for (std::size_t i = 0; i < us.size(); ++i) (*table)[j * us.size() + i] = pts.at({us[i], vs[j]});

    SurfaceChart c;
    c.name = name;
    c.periodic_u = periodic_u;
    c.periodic_v = periodic_v;
    c.domain = {au.t0, au.t0 + (periodic_u ? au.n : au.n - 1) * au.dt, av.t0,
                av.t0 + (periodic_v ? av.n : av.n - 1) * av.dt};
    c.map = [au, av, table](double u, double v) {
        const auto [iu, tu] = au.window(u);
        const auto [iv, tv] = av.window(v);
        const auto wu = detail::lagrange6(tu), wv = detail::lagrange6(tv);
        Vec3 acc = Vec3::Zero();
        for (int b = 0; b < 6; ++b) {
            const int jj = av.wrap(iv + b);
            for (int a = 0; a < 6; ++a) {
                const int ii = au.wrap(iu + a);
                acc += wu[a] * wv[b] * (*table)[static_cast<std::size_t>(jj) * au.n + ii];
            }
        }
        return acc;
    };
    c.mode = DerivativeMode::FiniteDifference;
    return c;
}

}  // namespace thinwall
