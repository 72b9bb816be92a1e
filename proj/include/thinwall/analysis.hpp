#pragma once

// Claim-level diagnostics: surface x transverse Schmidt spectra, naive/variational spectrum
// comparison, and eigenvalue derivatives with respect to a field scale.

#include "thinwall/operators.hpp"
#include "thinwall/solver.hpp"

#include <Eigen/SVD>

#include <cstdio>
#include <sstream>

namespace thinwall {

struct SchmidtReport {
    std::vector<double> singular_values;  // descending
    double separability_index = 0;        // sigma_2 / sigma_1
    std::string bipartition = "surface|transverse";
    int n_surface = 0, n3 = 0;

    nlohmann::json to_json() const {
        return {{"singular_values", singular_values},
                {"separability_index", separability_index},
                {"bipartition", bipartition},
                {"n_surface", n_surface},
                {"n3", n3}};
    }
};

/// Singular values of the state reshaped to n_surface x n3, with sqrt(weight) applied per node.
inline SchmidtReport schmidt_spectrum(const CVec& state, const SlabGrid& slab, int n_values) {
    if (state.size() != slab.size()) {
        throw Error(ErrorKind::ShapeMismatch, "state has " + std::to_string(state.size()) + " entries, slab has " +
                                                  std::to_string(slab.size()));
    }
    if (n_values < 1) throw Error(ErrorKind::InvalidArgument, "n_values must be >= 1");
    const int ns = slab.n_surface(), n3 = slab.n3();
    Eigen::MatrixXcd P(ns, n3);
    for (int k = 0; k < n3; ++k)
        for (int s = 0; s < ns; ++s) P(s, k) = std::sqrt(slab.weight(s, k)) * state[slab.index(s, k)];
    const Eigen::BDCSVD<Eigen::MatrixXcd> svd(P);
    const RVec sv = svd.singularValues();
    if (!(sv[0] > 0)) throw Error(ErrorKind::InvalidArgument, "state is zero");
    SchmidtReport r;
    r.n_surface = ns;
    r.n3 = n3;
    for (int i = 0; i < std::min<int>(n_values, static_cast<int>(sv.size())); ++i) r.singular_values.push_back(sv[i]);
    r.separability_index = sv.size() > 1 ? sv[1] / sv[0] : 0.0;
    return r;
}

struct ComparisonRow {
    int index = 0;
    cplx naive, variational;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    double max_im_naive = 0, max_im_variational = 0;
    bool naive_complex = false, variational_complex = false;
    double defect_naive = 0, defect_variational = 0;
    // |diag(H_naive - H_var)| statistics when the operator difference is supplied.
    bool has_anomalous_profile = false;
    double anomalous_max = 0, anomalous_mean = 0;
    std::string verdict;

    static constexpr double kImagFlag = 1e-8;

    nlohmann::json to_json() const {
        nlohmann::json t = nlohmann::json::array();
        for (const auto& r : rows) {
            t.push_back({{"index", r.index},
                         {"naive_re", r.naive.real()},
                         {"naive_im", r.naive.imag()},
                         {"variational_re", r.variational.real()},
                         {"variational_im", r.variational.imag()}});
        }
        nlohmann::json j = {{"rows", t},
                            {"max_im_naive", max_im_naive},
                            {"max_im_variational", max_im_variational},
                            {"naive_complex", naive_complex},
                            {"variational_complex", variational_complex},
                            {"hermiticity_defect_naive", defect_naive},
                            {"hermiticity_defect_variational", defect_variational},
                            {"verdict", verdict}};
        if (has_anomalous_profile) j["anomalous_diagonal"] = {{"max_abs", anomalous_max}, {"mean_abs", anomalous_mean}};
        return j;
    }

    std::string to_text() const {
        std::ostringstream os;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%5s  %22s %22s   %22s %22s\n", "#", "naive Re", "naive Im", "variational Re",
                      "variational Im");
        os << buf;
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%5d  %22.15g %22.15g   %22.15g %22.15g\n", r.index, r.naive.real(),
                          r.naive.imag(), r.variational.real(), r.variational.imag());
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "max |Im|: naive %.3e, variational %.3e\n", max_im_naive, max_im_variational);
        os << buf;
        std::snprintf(buf, sizeof buf, "hermiticity defect: naive %.3e, variational %.3e\n", defect_naive,
                      defect_variational);
        os << buf;
        if (has_anomalous_profile) {
            std::snprintf(buf, sizeof buf, "anomalous diagonal |.|: max %.3e, mean %.3e\n", anomalous_max,
                          anomalous_mean);
            os << buf;
        }
        os << verdict << "\n";
        return os.str();
    }
};

/// Aligns two spectra of the same scenario (differing only in variant) by sorted real part.
inline ComparisonReport compare_variants(const SpectrumResult& naive, const SpectrumResult& var,
                                         const DiscreteOperator* delta = nullptr) {
    const auto& a = naive.meta;
    const auto& b = var.meta;
    auto mismatch = [](const std::string& what) {
        throw Error(ErrorKind::MetadataMismatch, "spectra differ in " + what);
    };
    if (a.grid_hash != b.grid_hash || a.n_u != b.n_u || a.n_v != b.n_v || a.n3 != b.n3) mismatch("grid");
    if (a.mass != b.mass || a.charge != b.charge) mismatch("particle parameters");
    if (a.field != b.field || a.gauge != b.gauge) mismatch("field");
    if (a.bc != b.bc || a.chart != b.chart) mismatch("boundary condition or chart");
    if (a.coef_adv != b.coef_adv || a.geometric_potential != b.geometric_potential) mismatch("assembly options");

    ComparisonReport r;
    const std::size_t n = std::min(naive.eigenvalues.size(), var.eigenvalues.size());
    for (std::size_t i = 0; i < n; ++i) {
        r.rows.push_back({static_cast<int>(i), naive.eigenvalues[i], var.eigenvalues[i]});
    }
    r.max_im_naive = naive.max_abs_imag();
    r.max_im_variational = var.max_abs_imag();
    r.naive_complex = r.max_im_naive > ComparisonReport::kImagFlag;
    r.variational_complex = r.max_im_variational > ComparisonReport::kImagFlag;
    r.defect_naive = naive.hermiticity_defect;
    r.defect_variational = var.hermiticity_defect;
    if (delta) {
        r.has_anomalous_profile = true;
        const auto d = delta->H.diagonal();
        double sum = 0;
        for (int i = 0; i < d.size(); ++i) {
            r.anomalous_max = std::max(r.anomalous_max, std::abs(d[i]));
            sum += std::abs(d[i]);
        }
        r.anomalous_mean = d.size() ? sum / static_cast<double>(d.size()) : 0.0;
    }
    if (r.naive_complex && !r.variational_complex) {
        r.verdict = "naive spectrum is complex; variational spectrum is real";
    } else if (!r.naive_complex && !r.variational_complex) {
        r.verdict = "both spectra are real";
    } else if (r.variational_complex && !r.naive_complex) {
        r.verdict = "variational spectrum is complex; naive spectrum is real";
    } else {
        r.verdict = "both spectra are complex";
    }
    return r;
}

using AssembleFn = std::function<DiscreteOperator(const VectorPotentialField&)>;
using FieldFamily = std::function<VectorPotentialField(double)>;

/// Central-difference d Re(lambda_i)/ds for the k lowest states at s0, states tracked from
/// s0 - ds to s0 + ds by maximal weighted overlap.
inline std::vector<double> field_derivative_probe(const AssembleFn& assemble, const FieldFamily& family, double s0,
                                                  double ds, int k, SolverConfig cfg = {}) {
    if (!(ds > 0)) throw Error(ErrorKind::InvalidArgument, "ds must be positive");
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
    const DiscreteOperator lo = assemble(family(s0 - ds));
    const DiscreteOperator hi = assemble(family(s0 + ds));
    if (lo.dimension() != hi.dimension()) throw Error(ErrorKind::GridMismatch, "family changes the grid");
    cfg.k = std::min(k + 2, lo.dimension() - 2);
    const SpectrumResult a = solve_lowest(lo, cfg);
    const SpectrumResult b = solve_lowest(hi, cfg);
    a.require_converged();
    b.require_converged();
    const RVec& W = lo.weights;
    std::vector<double> out;
    std::vector<int> used;
    for (int i = 0; i < k; ++i) {
        int best = -1;
        double bo = -1, second = -1;
        for (int j = 0; j < static_cast<int>(b.eigenvalues.size()); ++j) {
            const double o = std::abs(detail::wdot(a.eigenvectors.col(i), b.eigenvectors.col(j), W));
            if (o > bo) {
                second = bo;
                bo = o;
                best = j;
            } else {
                second = std::max(second, o);
            }
        }
        if (bo < 0.7 || std::find(used.begin(), used.end(), best) != used.end()) {
            throw Error(ErrorKind::DegenerateTracking, "state " + std::to_string(i) + " has best overlap " +
                                                           std::to_string(bo) + " (runner-up " +
                                                           std::to_string(second) + ")");
        }
        used.push_back(best);
        out.push_back((b.eigenvalues[best].real() - a.eigenvalues[i].real()) / (2 * ds));
    }
    return out;
}

}  // namespace thinwall
