#include "beamtomo/linearize.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace beamtomo {

DtNOracle::DtNOracle(const SemilinearSpec& spec, const Grid& grid, const PicardOptions& popt,
                     std::size_t cache_capacity)
    : ctx_(std::make_shared<SolverContext>(spec, grid)), popt_(popt), capacity_(cache_capacity) {}

void DtNOracle::set_initial_data(std::vector<cplx> u0, std::vector<cplx> u1) {
    const std::size_t n = grid().nodes();
    if ((!u0.empty() && u0.size() != n) || (!u1.empty() && u1.size() != n))
        throw PreconditionError("linearize", "initial data do not match the grid");
    u0_ = std::move(u0);
    u1_ = std::move(u1);
    clear_cache();
}

void DtNOracle::clear_cache() const {
    std::lock_guard<std::mutex> lock(mu_);
    cache_.clear();
    order_.clear();
}

std::uint64_t DtNOracle::key(const OracleInput& in) const {
    std::uint64_t k = fnv1a("dtn", 3);
    auto mix = [&](const void* p, std::size_t n, char tag) {
        k = fnv1a(&tag, 1, k);
        if (p) k = fnv1a(p, n, k);
    };
    mix(in.h ? in.h->data.data() : nullptr, in.h ? in.h->data.size() * sizeof(cplx) : 0, 'h');
    mix(in.u0 ? in.u0->data() : nullptr, in.u0 ? in.u0->size() * sizeof(cplx) : 0, '0');
    mix(in.u1 ? in.u1->data() : nullptr, in.u1 ? in.u1->size() * sizeof(cplx) : 0, '1');
    return k;
}

BoundaryTrace<cplx> DtNOracle::operator()(const OracleInput& in_raw) const {
    OracleInput in = in_raw;
    if (!in.u0 && !u0_.empty()) in.u0 = &u0_;
    if (!in.u1 && !u1_.empty()) in.u1 = &u1_;
    const std::uint64_t k = key(in);
    if (capacity_ > 0) {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(k);
        if (it != cache_.end()) {
            ++hits_;
            return *it->second;
        }
    }
    SolveOptions so;
    so.store_field = false;
    Solution<cplx> sol;
    try {
        sol = solve_semilinear<cplx>(*ctx_, in.h, in.u0, in.u1, popt_, so);
    } catch (const ContractionFailure& e) {
        throw OracleError("linearize", std::string("oracle evaluation failed: ") + e.what());
    }
    auto tr = std::make_shared<const BoundaryTrace<cplx>>(std::move(sol.trace));
    std::lock_guard<std::mutex> lock(mu_);
    ++evaluations_;
    if (capacity_ > 0) {
        if (cache_.size() >= capacity_ && !order_.empty()) {
            cache_.erase(order_.front());
            order_.erase(order_.begin());
        }
        if (cache_.emplace(k, tr).second) order_.push_back(k);
    }
    return *tr;
}

BoundaryTrace<cplx> DtNOracle::operator()(const BoundaryData<cplx>& h) const {
    OracleInput in;
    in.h = &h;
    return (*this)(in);
}

BoundaryTrace<cplx> dtn(const DtNOracle& oracle, const OracleInput& in) { return oracle(in); }
BoundaryTrace<cplx> dtn(const DtNOracle& oracle, const BoundaryData<cplx>& h) { return oracle(h); }

std::string StencilReport::to_json() const {
    std::ostringstream os;
    os << std::setprecision(17) << "{\"order\":" << order << ",\"eps\":" << eps << ",\"corners\":[";
    for (std::size_t c = 0; c < corners.size(); ++c) {
        os << (c ? "," : "") << "{\"signs\":[";
        for (std::size_t i = 0; i < corners[c].size(); ++i) os << (i ? "," : "") << corners[c][i];
        os << "],\"trace_norm\":" << corner_norms[c] << "}";
    }
    os << "],\"result_norm\":" << result_norm << "}";
    return os.str();
}

BoundaryTrace<cplx> eps_derivative(const DtNOracle& oracle, const EpsStencil& st, StencilReport* report) {
    const int N = st.order();
    if (N < 1) throw PreconditionError("linearize", "stencil has no directions");
    if (N > 3) throw UnsupportedOrder("linearize", "mixed derivatives beyond third order are not supported");
    if (!(st.eps > 0)) throw PreconditionError("linearize", "stencil step eps must be positive");
    const bool use_h = !st.h.empty();
    const std::size_t ncorner = std::size_t(1) << N;

    std::vector<BoundaryTrace<cplx>> traces(ncorner);
    std::vector<std::string> failures(ncorner);
    auto signs_of = [&](std::size_t c) {
        std::vector<int> s(N);
        for (int i = 0; i < N; ++i) s[i] = (c >> i) & 1 ? -1 : 1;
        return s;
    };
    parallel_for(ncorner, [&](std::size_t c) {
        const auto s = signs_of(c);
        try {
            if (use_h) {
                BoundaryData<cplx> h = st.h[0];
                for (auto& v : h.data) v *= s[0] * st.eps;
                for (int i = 1; i < N; ++i)
                    for (std::size_t j = 0; j < h.data.size(); ++j) h.data[j] += double(s[i]) * st.eps * st.h[i].data[j];
                traces[c] = oracle(h);
            } else {
                std::vector<cplx> mu(st.mu[0].size());
                for (int i = 0; i < N; ++i)
                    for (std::size_t j = 0; j < mu.size(); ++j) mu[j] += double(s[i]) * st.eps * st.mu[i][j];
                OracleInput in;
                in.u0 = &mu;
                traces[c] = oracle(in);
            }
        } catch (const Error& e) {
            failures[c] = e.what();
        }
    });
    for (std::size_t c = 0; c < ncorner; ++c) {
        if (failures[c].empty()) continue;
        std::ostringstream os;
        os << "corner (";
        const auto s = signs_of(c);
        for (int i = 0; i < N; ++i) os << (i ? "," : "") << (s[i] > 0 ? "+" : "-") << "eps";
        os << ") failed: " << failures[c];
        throw StencilError("linearize", os.str());
    }

    BoundaryTrace<cplx> out(traces[0].slots, traces[0].levels);
    const double scale = 1.0 / std::pow(2.0 * st.eps, N);
    for (std::size_t c = 0; c < ncorner; ++c) {
        const auto s = signs_of(c);
        int prod = 1;
        for (int v : s) prod *= v;
        const double w = prod * scale;
        for (std::size_t j = 0; j < out.data.size(); ++j) out.data[j] += w * traces[c].data[j];
    }
    if (report) {
        report->order = N;
        report->eps = st.eps;
        report->corners.clear();
        report->corner_norms.clear();
        for (std::size_t c = 0; c < ncorner; ++c) {
            report->corners.push_back(signs_of(c));
            report->corner_norms.push_back(trace_norm(oracle.grid(), traces[c]));
        }
        report->result_norm = trace_norm(oracle.grid(), out);
    }
    return out;
}

namespace {

SemilinearSpec linear_part(const SemilinearSpec& spec) {
    SemilinearSpec lin = spec;
    lin.f2 = Coefficient::none();
    lin.f3 = Coefficient::none();
    lin.extra = nullptr;
    return lin;
}

// Coefficient values at grid level k, node n (zero-safe).
double coef(const double* table, std::size_t n) { return table ? table[n] : 0.0; }

}  // namespace

BoundaryTrace<cplx> first_linearization(const SemilinearSpec& spec, const Grid& grid, const BoundaryData<cplx>* h,
                                        const std::vector<cplx>* mu) {
    SolverContext ctx(linear_part(spec), grid);
    LinearInputs<cplx> in;
    in.h = h;
    in.u0 = mu;
    SolveOptions so;
    so.store_field = false;
    return solve_linear(ctx, in, Direction::forward, so).trace;
}

BoundaryTrace<cplx> third_linearization(const SemilinearSpec& spec, const Grid& grid,
                                        const std::vector<BoundaryData<cplx>>& h) {
    if (h.size() != 3) throw PreconditionError("linearize", "third linearization needs three directions");
    if (spec.extra) throw PreconditionError("linearize", "direct third linearization needs a polynomial nonlinearity");
    SolverContext lin(linear_part(spec), grid);
    SolverContext full(spec, grid);  // for sampled f2, f3
    const std::size_t nn = grid.nodes();

    std::vector<CField> v;
    for (const auto& hi : h) {
        LinearInputs<cplx> in;
        in.h = &hi;
        v.push_back(solve_linear(lin, in, Direction::forward).field);
    }
    // W_ij solves 𝓛W = −f2 v_i v_j (only when f2 ≠ 0)
    const bool has_f2 = !spec.f2.zero;
    std::vector<CField> W(3);
    const int pairs[3][2] = {{1, 2}, {0, 2}, {0, 1}};  // W[i] omits direction i
    if (has_f2) {
        for (int p = 0; p < 3; ++p) {
            const CField& a = v[pairs[p][0]];
            const CField& b = v[pairs[p][1]];
            LinearInputs<cplx> in;
            in.source = [&](std::size_t k, cplx* dst) {
                const double* f2 = full.f2(k);
                for (std::size_t n = 0; n < nn; ++n) dst[n] = -coef(f2, n) * a(k, n) * b(k, n);
                return true;
            };
            W[p] = solve_linear(lin, in, Direction::forward).field;
        }
    }
    LinearInputs<cplx> in;
    in.source = [&](std::size_t k, cplx* dst) {
        const double* f2 = full.f2(k);
        const double* f3 = full.f3(k);
        for (std::size_t n = 0; n < nn; ++n) {
            cplx s = coef(f3, n) * v[0](k, n) * v[1](k, n) * v[2](k, n);
            if (has_f2)
                s += coef(f2, n) * (v[0](k, n) * W[0](k, n) + v[1](k, n) * W[1](k, n) + v[2](k, n) * W[2](k, n));
            dst[n] = -s;
        }
        return true;
    };
    SolveOptions so;
    so.store_field = false;
    return solve_linear(lin, in, Direction::forward, so).trace;
}

}  // namespace beamtomo
