#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace beamtomo {

using cplx = std::complex<double>;
using Vec2 = Eigen::Vector2d;

inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kPi = 3.14159265358979323846;

// Configuration problems map to CLI exit code 2, everything else to 3.
class Error : public std::runtime_error {
public:
    Error(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }
    virtual bool is_config() const { return false; }

private:
    std::string stage_;
};

class ConfigError : public Error {
public:
    using Error::Error;
    bool is_config() const override { return true; }
};

#define BEAMTOMO_ERROR(Name)         \
    class Name : public Error {      \
    public:                          \
        using Error::Error;          \
    };

BEAMTOMO_ERROR(PreconditionError)
BEAMTOMO_ERROR(TrappedRayError)
BEAMTOMO_ERROR(ChartDomainError)
BEAMTOMO_ERROR(ConjugatePointError)
BEAMTOMO_ERROR(DegeneracyError)
BEAMTOMO_ERROR(StepSizeError)
BEAMTOMO_ERROR(ResolutionError)
BEAMTOMO_ERROR(BlowupError)
BEAMTOMO_ERROR(ContractionFailure)
BEAMTOMO_ERROR(OracleError)
BEAMTOMO_ERROR(StencilError)
BEAMTOMO_ERROR(CoverageError)
BEAMTOMO_ERROR(InversionError)
BEAMTOMO_ERROR(ProbeQualityError)
BEAMTOMO_ERROR(IdentityViolation)
BEAMTOMO_ERROR(GeometryError)
BEAMTOMO_ERROR(HorizonError)
BEAMTOMO_ERROR(CriticalPointError)
BEAMTOMO_ERROR(UnsupportedOrder)
BEAMTOMO_ERROR(NumericError)

#undef BEAMTOMO_ERROR

// Worker count; BEAMTOMO_THREADS in the environment wins over set_threads.
void set_threads(int n);
int threads();

// Static block partition, so any per-index reduction the caller does
// afterwards is deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// Smooth C-infinity step: 0 for x <= 0, 1 for x >= 1.
double smooth_step(double x);
// Derivative-free bump: 1 on [0, 1/2], 0 beyond 1, smooth in between.
double smooth_cutoff(double r);

// Stable FNV-1a, used for cache keys and config provenance.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 1469598103934665603ULL);
std::string hex64(std::uint64_t v);

}  // namespace beamtomo
