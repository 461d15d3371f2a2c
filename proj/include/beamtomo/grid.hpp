#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "beamtomo/common.hpp"

namespace beamtomo {

class Domain;

struct BoundarySample {
    std::size_t node;      // boundary node
    std::size_t inward1;   // first interior neighbour along -normal
    std::size_t inward2;   // second interior neighbour
    Vec2 normal;           // outward Euclidean unit normal
    double weight;         // spatial quadrature weight on the boundary
};

// Uniform space-time grid over an interval or rectangle; levels k = 0..nt
// at times t0 + k*dt.
class Grid {
public:
    Grid() = default;
    // Box grid with explicit node counts (ny ignored for dim 1).
    Grid(int dim, double x0, double y0, double h, int nx, int ny, double t0, double dt, int nt);

    // Solver grid on an interval/rectangle domain; dt = T / ceil(T / (cfl h / speed_max)).
    static Grid for_domain(const Domain& domain, double h, double T, double cfl, double speed_max = 1.0,
                           double t0 = 0.0);

    int dim() const { return dim_; }
    int nx() const { return nx_; }
    int ny() const { return ny_; }
    int nt() const { return nt_; }
    double h() const { return h_; }
    double dt() const { return dt_; }
    double t0() const { return t0_; }
    double T() const { return t0_ + nt_ * dt_; }
    double x0() const { return x0_; }
    double y0() const { return y0_; }
    double cfl(double speed_max = 1.0) const { return dt_ * speed_max / h_; }
    std::size_t nodes() const { return static_cast<std::size_t>(nx_) * ny_; }
    std::size_t levels() const { return static_cast<std::size_t>(nt_) + 1; }

    std::size_t index(int i, int j = 0) const { return static_cast<std::size_t>(j) * nx_ + i; }
    int ix(std::size_t node) const { return static_cast<int>(node % nx_); }
    int iy(std::size_t node) const { return static_cast<int>(node / nx_); }
    double t(int k) const { return t0_ + k * dt_; }
    Vec2 point(std::size_t node) const {
        return Vec2(x0_ + ix(node) * h_, dim_ == 2 ? y0_ + iy(node) * h_ : 0.0);
    }
    bool on_boundary(std::size_t node) const;

    const std::vector<std::size_t>& boundary_nodes() const { return boundary_nodes_; }
    const std::vector<BoundarySample>& boundary_samples() const { return boundary_samples_; }
    // position of a node inside boundary_nodes(), or -1
    long boundary_slot(std::size_t node) const { return slot_[node]; }

    // Spatial quadrature weight (trapezoid) for a node.
    double cell_weight(std::size_t node) const;

private:
    void build_boundary();

    int dim_ = 1;
    int nx_ = 0, ny_ = 1, nt_ = 0;
    double x0_ = 0.0, y0_ = 0.0, h_ = 0.0, t0_ = 0.0, dt_ = 0.0;
    std::vector<std::size_t> boundary_nodes_;
    std::vector<BoundarySample> boundary_samples_;
    std::vector<long> slot_;
};

// Space-time table, level-major: value(k, node).
template <class S>
struct Field {
    const Grid* grid = nullptr;
    std::string kind;
    std::vector<S> data;

    Field() = default;
    Field(const Grid& g, std::string k) : grid(&g), kind(std::move(k)), data(g.levels() * g.nodes(), S{}) {}
    S& operator()(std::size_t k, std::size_t node) { return data[k * grid->nodes() + node]; }
    const S& operator()(std::size_t k, std::size_t node) const { return data[k * grid->nodes() + node]; }
    S* level(std::size_t k) { return data.data() + k * grid->nodes(); }
    const S* level(std::size_t k) const { return data.data() + k * grid->nodes(); }
};

// Values on the boundary samples (trace) or boundary nodes (Dirichlet data),
// level-major: value(k, slot).
template <class S>
struct BoundaryTable {
    std::size_t slots = 0;
    std::size_t levels = 0;
    std::vector<S> data;

    BoundaryTable() = default;
    BoundaryTable(std::size_t n_slots, std::size_t n_levels)
        : slots(n_slots), levels(n_levels), data(n_slots * n_levels, S{}) {}
    S& operator()(std::size_t k, std::size_t i) { return data[k * slots + i]; }
    const S& operator()(std::size_t k, std::size_t i) const { return data[k * slots + i]; }
    bool empty() const { return data.empty(); }
};

// Dirichlet data indexed by Grid::boundary_nodes(); traces by Grid::boundary_samples().
template <class S>
using BoundaryData = BoundaryTable<S>;
template <class S>
using BoundaryTrace = BoundaryTable<S>;

using RField = Field<double>;
using CField = Field<cplx>;

// ∫_Σ a·b dΣ with trapezoid in time and the samples' spatial weights.
template <class A, class B>
auto pair_traces(const Grid& grid, const BoundaryTrace<A>& a, const BoundaryTable<B>& b_on_samples) {
    using R = decltype(A{} * B{});
    R acc{};
    const auto& samples = grid.boundary_samples();
    for (std::size_t k = 0; k < a.levels; ++k) {
        const double wt = (k == 0 || k + 1 == a.levels) ? 0.5 * grid.dt() : grid.dt();
        R level{};
        for (std::size_t i = 0; i < samples.size(); ++i) level += a(k, i) * b_on_samples(k, i) * samples[i].weight;
        acc += level * wt;
    }
    return acc;
}

// Discrete L²(Σ) norm of a trace.
template <class S>
double trace_norm(const Grid& grid, const BoundaryTrace<S>& a) {
    double acc = 0.0;
    const auto& samples = grid.boundary_samples();
    for (std::size_t k = 0; k < a.levels; ++k) {
        const double wt = (k == 0 || k + 1 == a.levels) ? 0.5 * grid.dt() : grid.dt();
        for (std::size_t i = 0; i < samples.size(); ++i) acc += std::norm(a(k, i)) * samples[i].weight * wt;
    }
    return std::sqrt(acc);
}

}  // namespace beamtomo
