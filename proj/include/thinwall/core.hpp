#pragma once

#include <Eigen/Dense>

#include <complex>
#include <functional>
#include <stdexcept>
#include <string>

namespace thinwall {

// Natural units throughout: hbar = c = 1.

using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

enum class ErrorKind {
    DegenerateChart,
    SourceOnSurface,
    GridTooCoarse,
    GridMismatch,
    ThickSlab,
    SingularShift,
    NotConverged,
    StabilityViolation,
    ShapeMismatch,
    MetadataMismatch,
    DegenerateTracking,
    InvalidArgument,
    Config,
    Io,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::DegenerateChart: return "DegenerateChart";
        case ErrorKind::SourceOnSurface: return "SourceOnSurface";
        case ErrorKind::GridTooCoarse: return "GridTooCoarse";
        case ErrorKind::GridMismatch: return "GridMismatch";
        case ErrorKind::ThickSlab: return "ThickSlab";
        case ErrorKind::SingularShift: return "SingularShift";
        case ErrorKind::NotConverged: return "NotConverged";
        case ErrorKind::StabilityViolation: return "StabilityViolation";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::MetadataMismatch: return "MetadataMismatch";
        case ErrorKind::DegenerateTracking: return "DegenerateTracking";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::Config: return "Config";
        case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Optional sink for non-fatal diagnostics (e.g. x3 outside the thin-wall regime).
using WarningSink = std::function<void(const std::string&)>;

inline void warn(const WarningSink* sink, const std::string& msg) {
    if (sink && *sink) (*sink)(msg);
}

inline constexpr double kPi = 3.14159265358979323846;

// 64-bit FNV-1a, used for grid fingerprints in manifests.
class Fnv1a {
public:
    void add_bytes(const void* data, std::size_t n) {
        auto p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 1099511628211ULL;
        }
    }
    void add(double x) { add_bytes(&x, sizeof x); }
    void add(std::size_t x) { add_bytes(&x, sizeof x); }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 14695981039346656037ULL;
};

}  // namespace thinwall
