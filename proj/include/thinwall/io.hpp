#pragma once

// Artifact writers. Files are written to a temporary sibling and renamed into place.

#include "thinwall/analysis.hpp"
#include "thinwall/solver.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#ifdef _WIN32
#include <process.h>
#define THINWALL_GETPID _getpid
#else
#include <unistd.h>
#define THINWALL_GETPID getpid
#endif

namespace thinwall::io {

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp." + std::to_string(THINWALL_GETPID());
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error(ErrorKind::Io, "cannot write '" + tmp.string() + "'");
        os << content;
        if (!os) throw Error(ErrorKind::Io, "write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error(ErrorKind::Io, "cannot move output into '" + path.string() + "': " + ec.message());
    }
}

inline std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

inline nlohmann::json spectrum_json(const SpectrumResult& r) {
    nlohmann::json ev = nlohmann::json::array();
    for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) {
        ev.push_back({{"re", r.eigenvalues[i].real()},
                      {"im", r.eigenvalues[i].imag()},
                      {"residual", r.residuals[i]},
                      {"converged", static_cast<bool>(r.converged[i])}});
    }
    return {{"eigenvalues", ev},
            {"clusters", r.clusters},
            {"hermiticity_defect", r.hermiticity_defect},
            {"operator_max_abs", r.operator_scale},
            {"hermitian_mode", r.hermitian_mode},
            {"converged", r.all_converged},
            {"iterations", r.iterations},
            {"shift", {r.shift.real(), r.shift.imag()}},
            {"method", r.method},
            {"operator", r.meta.to_json()}};
}

// One row per eigenvalue; `cluster` is the degeneracy group id.
inline std::string spectrum_csv(const SpectrumResult& r) {
    std::vector<int> cl(r.eigenvalues.size(), 0);
    for (std::size_t c = 0; c < r.clusters.size(); ++c)
        for (int i : r.clusters[c]) cl[i] = static_cast<int>(c);
    std::ostringstream os;
    os << "index,re,im,residual,converged,cluster\n";
    for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) {
        os << i << "," << fmt(r.eigenvalues[i].real()) << "," << fmt(r.eigenvalues[i].imag()) << ","
           << fmt(r.residuals[i]) << "," << (r.converged[i] ? 1 : 0) << "," << cl[i] << "\n";
    }
    return os.str();
}

// Long format: node,state,re,im.
inline std::string eigenvectors_csv(const SpectrumResult& r) {
    std::ostringstream os;
    os << "node,state,re,im\n";
    for (int s = 0; s < r.eigenvectors.cols(); ++s)
        for (int p = 0; p < r.eigenvectors.rows(); ++p)
            os << p << "," << s << "," << fmt(r.eigenvectors(p, s).real()) << "," << fmt(r.eigenvectors(p, s).imag())
               << "\n";
    return os.str();
}

inline std::string schmidt_csv(const std::vector<std::pair<std::string, SchmidtReport>>& rows) {
    std::size_t nv = 0;
    for (const auto& [_, r] : rows) nv = std::max(nv, r.singular_values.size());
    std::ostringstream os;
    os << "state,separability_index";
    for (std::size_t i = 0; i < nv; ++i) os << ",sigma" << i + 1;
    os << "\n";
    for (const auto& [label, r] : rows) {
        os << label << "," << fmt(r.separability_index);
        for (std::size_t i = 0; i < nv; ++i) os << "," << (i < r.singular_values.size() ? fmt(r.singular_values[i]) : "");
        os << "\n";
    }
    return os.str();
}

}  // namespace thinwall::io
