#pragma once

// Shift-invert Krylov-Schur eigensolver in the sqrt(g)-weighted inner product, a dense
// path for small operators, and implicit-midpoint norm tracking.

#include "thinwall/core.hpp"
#include "thinwall/operators.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

namespace thinwall {

struct SolverConfig {
    int k = 6;
    std::optional<cplx> shift;  // unset: just below the Gershgorin lower bound
    double tol = 1e-8;
    int max_iter = 300;         // Krylov-Schur restart cycles
    int restart = 0;            // subspace dimension; 0 picks max(2k+2, 2k+16)
    std::uint64_t seed = 12345;
    int dense_threshold = 600;  // N below this uses the dense path
    bool force_krylov = false;
    double cluster_tol = 1e-6;  // relative to max |lambda|

    void validate(int n) const {
        if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
        if (!(tol > 0)) throw Error(ErrorKind::InvalidArgument, "tol must be positive");
        if (max_iter < 1) throw Error(ErrorKind::InvalidArgument, "max_iter must be >= 1");
        if (restart != 0 && restart < 2 * k + 2) {
            throw Error(ErrorKind::InvalidArgument, "restart dimension must be >= 2k+2");
        }
        if (n < k + 2) throw Error(ErrorKind::InvalidArgument, "operator dimension must be >= k+2");
        if (!(cluster_tol >= 0)) throw Error(ErrorKind::InvalidArgument, "cluster_tol must be >= 0");
    }
    int subspace(int n) const {
        const int m = restart ? restart : std::max(2 * k + 2, 2 * k + 16);
        return std::min(m, n - 1);
    }
};

struct SpectrumResult {
    std::vector<cplx> eigenvalues;       // sorted by real part
    Eigen::MatrixXcd eigenvectors;       // columns, unit norm in the weighted inner product
    std::vector<double> residuals;       // ||H v - lambda v||_W / ||v||_W
    std::vector<bool> converged;
    std::vector<std::vector<int>> clusters;
    double hermiticity_defect = 0;
    double operator_scale = 0;           // max |H_ij|
    bool hermitian_mode = false;
    bool all_converged = false;
    int iterations = 0;
    cplx shift = 0;
    std::string method;
    OperatorMeta meta;

    double max_abs_imag() const {
        double m = 0;
        for (auto l : eigenvalues) m = std::max(m, std::abs(l.imag()));
        return m;
    }
    void require_converged() const {
        if (!all_converged) throw Error(ErrorKind::NotConverged, "eigensolver did not converge all requested pairs");
    }
};

namespace detail {

inline double wnorm(const CVec& x, const RVec& w) {
    return std::sqrt((x.cwiseAbs2().array() * w.array()).sum());
}
inline cplx wdot(const CVec& x, const CVec& y, const RVec& w) {
    return (x.conjugate().array() * w.array().cast<cplx>() * y.array()).sum();
}

inline double row_norm_inf(const SpMat& H) {
    RVec r = RVec::Zero(H.rows());
    for (int k = 0; k < H.outerSize(); ++k)
        for (SpMat::InnerIterator it(H, k); it; ++it) r[it.row()] += std::abs(it.value());
    return r.size() ? r.maxCoeff() : 0.0;
}

inline double gershgorin_lower(const SpMat& H) {
    RVec off = RVec::Zero(H.rows());
    RVec dia = RVec::Zero(H.rows());
    for (int k = 0; k < H.outerSize(); ++k)
        for (SpMat::InnerIterator it(H, k); it; ++it) {
            if (it.row() == it.col()) dia[it.row()] += it.value().real();
            else off[it.row()] += std::abs(it.value());
        }
    return (dia - off).minCoeff();
}

// Givens rotation zeroing g in (f, g).
inline void zlartg(cplx f, cplx g, double& c, cplx& s) {
    const double af = std::abs(f), ag = std::abs(g);
    if (ag == 0) {
        c = 1;
        s = 0;
        return;
    }
    if (af == 0) {
        c = 0;
        s = std::conj(g) / ag;
        return;
    }
    const double d = std::hypot(af, ag);
    c = af / d;
    s = (f / af) * std::conj(g) / d;
}

// x <- c x + s y, y <- c y - conj(s) x
template <class X, class Y>
inline void zrot(X&& x, Y&& y, double c, cplx s) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const cplx t = c * x[i] + s * y[i];
        y[i] = c * y[i] - std::conj(s) * x[i];
        x[i] = t;
    }
}

// Swap adjacent diagonal entries j, j+1 of upper-triangular T, updating Q.
inline void schur_swap(Eigen::MatrixXcd& T, Eigen::MatrixXcd& Q, int j) {
    const int n = static_cast<int>(T.rows());
    const cplx t11 = T(j, j), t22 = T(j + 1, j + 1);
    double c;
    cplx s;
    zlartg(T(j, j + 1), t22 - t11, c, s);
    if (j + 2 < n) {
        zrot(T.row(j).segment(j + 2, n - j - 2), T.row(j + 1).segment(j + 2, n - j - 2), c, s);
    }
    if (j > 0) zrot(T.col(j).head(j), T.col(j + 1).head(j), c, std::conj(s));
    T(j, j) = t22;
    T(j + 1, j + 1) = t11;
    zrot(Q.col(j), Q.col(j + 1), c, std::conj(s));
}

// Reorders so the `want` diagonal entries of largest modulus lead, largest first.
inline void schur_sort(Eigen::MatrixXcd& T, Eigen::MatrixXcd& Q, int want) {
    const int n = static_cast<int>(T.rows());
    for (int t = 0; t < std::min(want, n); ++t) {
        int best = t;
        for (int j = t + 1; j < n; ++j)
            if (std::abs(T(j, j)) > std::abs(T(best, best))) best = j;
        for (int j = best - 1; j >= t; --j) schur_swap(T, Q, j);
    }
}

struct ShiftInvert {
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
    const SpMat* H = nullptr;
    cplx sigma;
    double guard = 0;

    void factor(const SpMat& h, cplx s) {
        H = &h;
        sigma = s;
        SpMat A = h;
        SpMat I(h.rows(), h.cols());
        I.setIdentity();
        A -= s * I;
        A.makeCompressed();
        lu.analyzePattern(A);
        lu.factorize(A);
        if (lu.info() != Eigen::Success) {
            throw Error(ErrorKind::SingularShift, "shift is (numerically) an eigenvalue; perturb sigma");
        }
        const double scale = std::max(1.0, std::abs(s)) * std::max(1.0, detail::row_norm_inf(h));
        guard = 1e13 / scale;
    }
    CVec apply(const CVec& x, const RVec& w) const {
        CVec y = lu.solve(x);
        if (!y.allFinite() || wnorm(y, w) > guard * wnorm(x, w)) {
            throw Error(ErrorKind::SingularShift, "shift is (numerically) an eigenvalue; perturb sigma");
        }
        return y;
    }
};

// W-orthogonalizes w against the columns of V (two passes of classical Gram-Schmidt).
inline Eigen::VectorXcd orthogonalize(const Eigen::MatrixXcd& V, int ncols, CVec& w, const RVec& W) {
    Eigen::VectorXcd h = Eigen::VectorXcd::Zero(ncols);
    if (ncols == 0) return h;
    const auto Vb = V.leftCols(ncols);
    for (int pass = 0; pass < 2; ++pass) {
        const Eigen::VectorXcd c = Vb.adjoint() * (W.cast<cplx>().asDiagonal() * w);
        w -= Vb * c;
        h += c;
    }
    return h;
}

struct KsOutput {
    Eigen::MatrixXcd X;         // W-orthonormal Schur vectors (leading `nev` by |theta|)
    std::vector<cplx> theta;
    std::vector<bool> converged;
    int cycles = 0;
};

// Krylov-Schur on T = (H - sigma)^{-1}, deflated against the W-orthonormal columns of L.
inline KsOutput krylov_schur(const ShiftInvert& op, const RVec& W, const Eigen::MatrixXcd& L, int nev, int m,
                             int max_cycles, double tol_theta, bool hermitian, std::mt19937_64& rng) {
    const int n = static_cast<int>(W.size());
    const int nl = static_cast<int>(L.cols());
    m = std::min(m, n - nl - 1);
    nev = std::min(nev, m - 1);
    auto deflate = [&](CVec& x) {
        if (nl) orthogonalize(L, nl, x, W);
    };

    Eigen::MatrixXcd V(n, m + 1);
    Eigen::MatrixXcd Hm = Eigen::MatrixXcd::Zero(m + 1, m);
    std::normal_distribution<double> nd;
    CVec v0(n);
    for (int i = 0; i < n; ++i) v0[i] = cplx(nd(rng), nd(rng));
    deflate(v0);
    V.col(0) = v0 / wnorm(v0, W);

    int p = 0;
    KsOutput out;
    Eigen::MatrixXcd T, Q;
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
        out.cycles = cycle + 1;
        for (int j = p; j < m; ++j) {
            CVec w = op.apply(V.col(j), W);
            deflate(w);
            Hm.col(j).head(j + 1) = orthogonalize(V, j + 1, w, W);
            deflate(w);
            double beta = wnorm(w, W);
            if (beta < 1e-14 * std::abs(Hm(j, j)) + 1e-300) {
                // Invariant subspace: continue with a fresh random direction.
                for (int i = 0; i < n; ++i) w[i] = cplx(nd(rng), nd(rng));
                deflate(w);
                orthogonalize(V, j + 1, w, W);
                beta = 0;
                V.col(j + 1) = w / wnorm(w, W);
            } else {
                V.col(j + 1) = w / beta;
            }
            Hm(j + 1, j) = beta;
        }

        Eigen::MatrixXcd S = Hm.topRows(m);
        if (hermitian) {
            S = 0.5 * (S + S.adjoint()).eval();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(S);
            std::vector<int> idx(m);
            std::iota(idx.begin(), idx.end(), 0);
            std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
                return std::abs(es.eigenvalues()[a]) > std::abs(es.eigenvalues()[b]);
            });
            Q.resize(m, m);
            T = Eigen::MatrixXcd::Zero(m, m);
            for (int c = 0; c < m; ++c) {
                Q.col(c) = es.eigenvectors().col(idx[c]);
                T(c, c) = es.eigenvalues()[idx[c]];
            }
        } else {
            Eigen::ComplexSchur<Eigen::MatrixXcd> cs(S);
            T = cs.matrixT();
            Q = cs.matrixU();
            schur_sort(T, Q, std::min(m, nev + (m - nev) / 2));
        }
        const Eigen::RowVectorXcd b = Hm.row(m) * Q;

        // Converged Schur vectors must form a leading block.
        int nconv = 0;
        while (nconv < nev && std::abs(b[nconv]) <= tol_theta * std::abs(T(nconv, nconv))) ++nconv;

        if (nconv >= nev || cycle + 1 == max_cycles) {
            out.X = V.leftCols(m) * Q.leftCols(nev);
            out.theta.resize(nev);
            out.converged.resize(nev);
            for (int i = 0; i < nev; ++i) {
                out.theta[i] = T(i, i);
                out.converged[i] = i < nconv;
            }
            return out;
        }

        // Thick restart with p vectors.
        p = std::min(m - 1, std::max(nev + nconv, nev + (m - nev) / 2));
        const Eigen::MatrixXcd Vp = V.leftCols(m) * Q.leftCols(p);
        const CVec vnext = V.col(m);
        V.leftCols(p) = Vp;
        V.col(p) = vnext;
        Hm.setZero();
        Hm.topLeftCorner(p, p) = T.topLeftCorner(p, p).triangularView<Eigen::Upper>();
        Hm.row(p).head(p) = b.head(p);
    }
    return out;
}

inline std::vector<std::vector<int>> group_clusters(const std::vector<cplx>& ev, double rel_tol) {
    std::vector<std::vector<int>> cl;
    double scale = 0;
    for (auto l : ev) scale = std::max(scale, std::abs(l));
    const double tol = rel_tol * (scale > 0 ? scale : 1.0);
    for (int i = 0; i < static_cast<int>(ev.size()); ++i) {
        if (!cl.empty() && std::abs(ev[i] - ev[cl.back().back()]) <= tol) cl.back().push_back(i);
        else cl.push_back({i});
    }
    return cl;
}

// Fixes the global phase: largest-modulus component real and positive.
inline void fix_phase(Eigen::Ref<CVec> v) {
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    const cplx ph = v[imax] / std::abs(v[imax]);
    v /= ph;
}

}  // namespace detail

inline cplx default_shift(const DiscreteOperator& op) {
    const double lo = detail::gershgorin_lower(op.H);
    return lo - 1e-3 * std::max(1.0, std::abs(lo));
}

/// k eigenpairs nearest the shift, sorted by real part.
inline SpectrumResult solve_lowest(const DiscreteOperator& op, const SolverConfig& cfg) {
    const int n = op.dimension();
    cfg.validate(n);
    SpectrumResult res;
    res.meta = op.meta;
    res.operator_scale = op.max_abs();
    res.hermiticity_defect = hermiticity_residual(op);
    res.hermitian_mode = res.hermiticity_defect <= 1e-12 * std::max(1.0, res.operator_scale);
    res.shift = cfg.shift ? *cfg.shift : default_shift(op);
    const RVec& W = op.weights;
    const cplx sigma = res.shift;

    std::vector<cplx> lam;
    Eigen::MatrixXcd X;
    const bool dense = n < cfg.dense_threshold && !cfg.force_krylov;

    if (dense) {
        res.method = res.hermitian_mode ? "dense_hermitian" : "dense_general";
        const Eigen::MatrixXcd Hd = Eigen::MatrixXcd(op.H);
        std::vector<cplx> all;
        Eigen::MatrixXcd vecs;
        if (res.hermitian_mode) {
            const RVec s = W.cwiseSqrt();
            Eigen::MatrixXcd Hs = s.cast<cplx>().asDiagonal() * Hd * s.cwiseInverse().cast<cplx>().asDiagonal();
            Hs = 0.5 * (Hs + Hs.adjoint()).eval();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Hs);
            vecs = s.cwiseInverse().cast<cplx>().asDiagonal() * es.eigenvectors();
            for (int i = 0; i < n; ++i) all.push_back(es.eigenvalues()[i]);
        } else {
            Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Hd);
            if (es.info() != Eigen::Success) throw Error(ErrorKind::NotConverged, "dense eigensolver failed");
            vecs = es.eigenvectors();
            for (int i = 0; i < n; ++i) all.push_back(es.eigenvalues()[i]);
        }
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            const double da = std::abs(all[a] - sigma), db = std::abs(all[b] - sigma);
            if (da != db) return da < db;
            return all[a].real() < all[b].real();
        });
        X.resize(n, cfg.k);
        for (int i = 0; i < cfg.k; ++i) {
            lam.push_back(all[idx[i]]);
            X.col(i) = vecs.col(idx[i]);
        }
        res.iterations = 1;
    } else {
        res.method = res.hermitian_mode ? "krylov_schur_hermitian" : "krylov_schur";
        detail::ShiftInvert si;
        si.factor(op.H, sigma);
        std::mt19937_64 rng(cfg.seed);
        const double hscale = std::max(res.operator_scale, 1e-300);
        const double tol_theta = 0.1 * cfg.tol * hscale / (detail::row_norm_inf(op.H) + std::abs(sigma));
        const int m = cfg.subspace(n);

        Eigen::MatrixXcd L(n, 0);  // locked W-orthonormal invariant basis
        int cycles_left = cfg.max_iter;
        bool ok = true;
        std::vector<cplx> pending_theta;
        Eigen::MatrixXcd pending;
        for (int pass = 0; pass < 8 && cycles_left > 0; ++pass) {
            auto ks = detail::krylov_schur(si, W, L, cfg.k, m, cycles_left, tol_theta, res.hermitian_mode, rng);
            cycles_left -= ks.cycles;
            res.iterations += ks.cycles;
            int nconv = 0;
            while (nconv < static_cast<int>(ks.converged.size()) && ks.converged[nconv]) ++nconv;
            if (nconv < cfg.k && pass == 0) {
                // Not converged: keep the partial Ritz basis.
                ok = false;
                pending = ks.X;
                pending_theta = ks.theta;
                break;
            }
            // Smallest |theta| currently among the k best locked values.
            double kth = 0;
            if (L.cols() >= cfg.k) {
                const Eigen::MatrixXcd G = L.adjoint() * W.cast<cplx>().asDiagonal() *
                                           [&] {
                                               Eigen::MatrixXcd TL(n, L.cols());
                                               for (int c = 0; c < L.cols(); ++c) TL.col(c) = si.apply(L.col(c), W);
                                               return TL;
                                           }();
                Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(G);
                std::vector<double> mags;
                for (int i = 0; i < G.rows(); ++i) mags.push_back(std::abs(es.eigenvalues()[i]));
                std::sort(mags.rbegin(), mags.rend());
                kth = mags[cfg.k - 1];
            }
            int added = 0;
            for (int i = 0; i < nconv; ++i) {
                if (pass > 0 && std::abs(ks.theta[i]) <= kth * (1 + 1e-9)) break;
                CVec x = ks.X.col(i);
                if (L.cols()) detail::orthogonalize(L, static_cast<int>(L.cols()), x, W);
                const double nx = detail::wnorm(x, W);
                if (nx < 1e-8) continue;
                L.conservativeResize(n, L.cols() + 1);
                L.col(L.cols() - 1) = x / nx;
                ++added;
            }
            if (pass > 0 && added == 0) break;
            if (L.cols() + cfg.k + 2 >= n) break;
        }

        Eigen::MatrixXcd B = L;
        if (!ok) B = pending;
        // Rayleigh-Ritz of H on span(B).
        Eigen::MatrixXcd HB(n, B.cols());
        for (int c = 0; c < B.cols(); ++c) HB.col(c) = op.H * B.col(c);
        const Eigen::MatrixXcd G = B.adjoint() * W.cast<cplx>().asDiagonal() * HB;
        std::vector<cplx> ritz;
        Eigen::MatrixXcd Y;
        if (res.hermitian_mode) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (G + G.adjoint()));
            for (int i = 0; i < G.rows(); ++i) ritz.push_back(es.eigenvalues()[i]);
            Y = es.eigenvectors();
        } else {
            Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(G);
            for (int i = 0; i < G.rows(); ++i) ritz.push_back(es.eigenvalues()[i]);
            Y = es.eigenvectors();
        }
        std::vector<int> idx(ritz.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            const double da = std::abs(ritz[a] - sigma), db = std::abs(ritz[b] - sigma);
            if (da != db) return da < db;
            return ritz[a].real() < ritz[b].real();
        });
        const int kk = std::min<int>(cfg.k, static_cast<int>(ritz.size()));
        X.resize(n, kk);
        for (int i = 0; i < kk; ++i) {
            lam.push_back(ritz[idx[i]]);
            X.col(i) = B * Y.col(idx[i]);
        }
    }

    // Sort by real part (ties by imaginary part), normalize, residuals.
    std::vector<int> ord(lam.size());
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) {
        if (lam[a].real() != lam[b].real()) return lam[a].real() < lam[b].real();
        return lam[a].imag() < lam[b].imag();
    });
    res.eigenvectors.resize(n, static_cast<Eigen::Index>(lam.size()));
    bool all = lam.size() == static_cast<std::size_t>(cfg.k);
    for (std::size_t i = 0; i < ord.size(); ++i) {
        CVec v = X.col(ord[i]);
        v /= detail::wnorm(v, W);
        detail::fix_phase(v);
        cplx l = lam[ord[i]];
        if (res.hermitian_mode) l = l.real();
        const double r = detail::wnorm(op.H * v - l * v, W);
        const bool conv = r <= cfg.tol * res.operator_scale;
        all = all && conv;
        res.eigenvalues.push_back(l);
        res.eigenvectors.col(static_cast<Eigen::Index>(i)) = v;
        res.residuals.push_back(r);
        res.converged.push_back(conv);
    }
    res.all_converged = all;
    res.clusters = detail::group_clusters(res.eigenvalues, cfg.cluster_tol);
    return res;
}

/// Implicit-midpoint evolution; returns sum_i W_i |psi_i|^2 at steps 0..steps.
inline std::vector<double> norm_drift(const DiscreteOperator& op, int steps, double dt, const CVec& start) {
    if (start.size() != op.dimension()) throw Error(ErrorKind::ShapeMismatch, "start vector has wrong length");
    if (steps < 0 || !(dt > 0)) throw Error(ErrorKind::InvalidArgument, "need steps >= 0 and dt > 0");
    const double hn = detail::row_norm_inf(op.H);
    if (dt * hn > 1.0) {
        throw Error(ErrorKind::StabilityViolation,
                    "dt*||H|| = " + std::to_string(dt * hn) + " exceeds 1; reduce dt");
    }
    const int n = op.dimension();
    SpMat I(n, n);
    I.setIdentity();
    const cplx a(0, 0.5 * dt);
    SpMat Lhs = I + a * op.H;
    const SpMat Rhs = I - a * op.H;
    Lhs.makeCompressed();
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu(Lhs);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::StabilityViolation, "midpoint system is singular");
    std::vector<double> out;
    out.reserve(steps + 1);
    CVec psi = start;
    auto norm2 = [&](const CVec& x) { return (x.cwiseAbs2().array() * op.weights.array()).sum(); };
    out.push_back(norm2(psi));
    for (int s = 0; s < steps; ++s) {
        psi = lu.solve(Rhs * psi);
        out.push_back(norm2(psi));
    }
    return out;
}

}  // namespace thinwall
