#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "beamtomo/common.hpp"
#include "beamtomo/grid.hpp"
#include "beamtomo/wave_solver.hpp"

namespace beamtomo {

// One evaluation input: Dirichlet data and/or a Cauchy profile at t0.
// Missing pieces fall back to the oracle's fixed data.
struct OracleInput {
    const BoundaryData<cplx>* h = nullptr;
    const std::vector<cplx>* u0 = nullptr;
    const std::vector<cplx>* u1 = nullptr;
};

// Boundary measurement map h ↦ ∂_ν u|_Σ of the semilinear problem.
class DtNOracle {
public:
    DtNOracle(const SemilinearSpec& spec, const Grid& grid, const PicardOptions& popt = {},
              std::size_t cache_capacity = 64);

    // Fixed initial data (problem I); cleared by default (problem II).
    void set_initial_data(std::vector<cplx> u0, std::vector<cplx> u1);

    BoundaryTrace<cplx> operator()(const OracleInput& in) const;
    BoundaryTrace<cplx> operator()(const BoundaryData<cplx>& h) const;

    const SolverContext& context() const { return *ctx_; }
    const Grid& grid() const { return ctx_->grid(); }
    const SemilinearSpec& spec() const { return ctx_->spec(); }
    std::size_t evaluations() const { return evaluations_; }
    std::size_t cache_hits() const { return hits_; }
    void clear_cache() const;

private:
    std::uint64_t key(const OracleInput& in) const;

    std::shared_ptr<SolverContext> ctx_;
    PicardOptions popt_;
    std::vector<cplx> u0_, u1_;
    std::size_t capacity_;
    mutable std::mutex mu_;
    mutable std::unordered_map<std::uint64_t, std::shared_ptr<const BoundaryTrace<cplx>>> cache_;
    mutable std::vector<std::uint64_t> order_;  // insertion order for eviction
    mutable std::size_t evaluations_ = 0, hits_ = 0;
};

BoundaryTrace<cplx> dtn(const DtNOracle& oracle, const OracleInput& in);
BoundaryTrace<cplx> dtn(const DtNOracle& oracle, const BoundaryData<cplx>& h);

// Directions h_1..h_N (Dirichlet data or Cauchy profiles) and the step ε.
struct EpsStencil {
    std::vector<BoundaryData<cplx>> h;
    std::vector<std::vector<cplx>> mu;  // u0 profiles, used when h is empty
    double eps = 1e-3;

    int order() const { return static_cast<int>(h.empty() ? mu.size() : h.size()); }
};

struct StencilReport {
    int order = 0;
    double eps = 0.0;
    std::vector<std::vector<int>> corners;  // sign patterns
    std::vector<double> corner_norms;       // ‖Λ(corner)‖_{L²(Σ)}
    double result_norm = 0.0;

    std::string to_json() const;
};

// ∂^N/∂ε_1…∂ε_N Λ(Σ ε_k h_k) at ε = 0 by tensor central differences (2^N corners).
BoundaryTrace<cplx> eps_derivative(const DtNOracle& oracle, const EpsStencil& stencil,
                                   StencilReport* report = nullptr);

// Traces of the directly solved linearized systems.
// First order: 𝓛_{b,q}v = 0 with the stencil's data.
BoundaryTrace<cplx> first_linearization(const SemilinearSpec& spec, const Grid& grid, const BoundaryData<cplx>* h,
                                        const std::vector<cplx>* mu = nullptr);
// Third order for f = q u + f3 u³/6 (f2 = 0): 𝓛 W = −f3 v1 v2 v3, zero data.
BoundaryTrace<cplx> third_linearization(const SemilinearSpec& spec, const Grid& grid,
                                        const std::vector<BoundaryData<cplx>>& h);

}  // namespace beamtomo
