#include "beamtomo/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "beamtomo/beams.hpp"
#include "beamtomo/carleman.hpp"
#include "beamtomo/geometry.hpp"
#include "beamtomo/io.hpp"
#include "beamtomo/linearize.hpp"
#include "beamtomo/recon.hpp"
#include "beamtomo/transforms.hpp"
#include "beamtomo/wave_solver.hpp"

#ifndef BEAMTOMO_VERSION
#define BEAMTOMO_VERSION "0.0.0"
#endif

namespace beamtomo::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- schema

namespace {

struct Schema;

struct Key {
    std::string name;
    json def;
    std::string unit;
    std::string doc;
    const Schema* sub = nullptr;
    std::vector<std::string> choices;
    bool positive = false;
};

struct Schema {
    std::vector<Key> keys;

    Schema& add(std::string name, json def, std::string unit, std::string doc, bool positive = false) {
        keys.push_back({std::move(name), std::move(def), std::move(unit), std::move(doc), nullptr, {}, positive});
        return *this;
    }
    Schema& choice(std::string name, std::string def, std::vector<std::string> choices, std::string doc) {
        keys.push_back({std::move(name), def, "", std::move(doc), nullptr, std::move(choices), false});
        return *this;
    }
    Schema& object(std::string name, const Schema& sub, std::string doc) {
        keys.push_back({std::move(name), json::object(), "", std::move(doc), &sub, {}, false});
        return *this;
    }
    std::vector<std::string> names() const {
        std::vector<std::string> v;
        for (const auto& k : keys) v.push_back(k.name);
        return v;
    }
};

// Overrides of nested defaults per kind, applied before validation.
using Defaults = json;

const Schema& coefficient_schema() {
    static const Schema s = [] {
        Schema c;
        c.choice("type", "zero", {"zero", "constant", "bump"}, "coefficient shape");
        c.add("value", 0.0, "", "constant value (type=constant)");
        c.add("amp", 0.0, "", "bump amplitude");
        c.add("center", json::array({0.5}), "length", "bump center, one entry per spatial dimension");
        c.add("width", json::array({0.15}), "length", "bump widths per spatial dimension", true);
        c.add("t_center", 2.0, "time", "bump center in time");
        c.add("t_width", 0.0, "time", "bump width in time; 0 makes the bump time independent");
        return c;
    }();
    return s;
}

const Schema& coefficients_schema() {
    static const Schema s = [] {
        Schema c;
        c.object("b", coefficient_schema(), "damping b(t, x)");
        c.object("q", coefficient_schema(), "potential q(t, x)");
        c.object("f2", coefficient_schema(), "quadratic coefficient of u^2/2");
        c.object("f3", coefficient_schema(), "cubic coefficient of u^3/6");
        return c;
    }();
    return s;
}

const Schema& domain_schema() {
    static const Schema s = [] {
        Schema d;
        d.choice("type", "interval", {"interval", "rectangle", "disk"}, "domain shape");
        d.add("bounds", json::array({0.0, 1.0}), "length", "[a, b] for an interval, [x0, x1, y0, y1] for a rectangle");
        d.add("center", json::array({0.0, 0.0}), "length", "disk center");
        d.add("radius", 0.5, "length", "disk radius", true);
        return d;
    }();
    return s;
}

const Schema& metric_schema() {
    static const Schema s = [] {
        Schema m;
        m.choice("type", "euclidean", {"euclidean", "conformal"}, "metric class");
        m.add("amp", 0.0, "", "conformal factor c(x) = 1 + amp sin(k pi x_axis)");
        m.add("k", 1.0, "", "conformal wavenumber");
        m.add("axis", 0, "", "conformal axis (0 or 1)");
        m.add("padding", 0.0, "length", "extension width of the enlarged domain");
        return m;
    }();
    return s;
}

const Schema& grid_schema() {
    static const Schema s = [] {
        Schema g;
        g.add("h", 1.0 / 400.0, "length", "spatial step", true);
        g.add("T", 4.0, "time", "time horizon", true);
        g.add("cfl", 0.9, "", "Courant number dt/h times the maximal speed", true);
        return g;
    }();
    return s;
}

const Schema& rays_schema() {
    static const Schema s = [] {
        Schema r;
        r.add("s_lo", 0.25, "time", "1D: first entry time", true);
        r.add("s_hi", 2.75, "time", "1D: last entry time", true);
        r.add("n_per_end", 10, "", "1D: rays per boundary end (both directions)", true);
        r.add("n_points", 8, "", "2D: boundary points", true);
        r.add("n_dirs", 10, "", "2D: inward directions per point", true);
        r.add("n_s", 5, "", "2D: time offsets per direction", true);
        r.add("t_mid_lo", 1.2, "time", "2D: earliest ray midpoint time", true);
        r.add("t_mid_hi", 2.8, "time", "2D: latest ray midpoint time", true);
        r.add("grazing", 0.15, "rad", "2D: skipped angle near the tangent");
        r.add("step", 1e-3, "length", "geodesic sampling step", true);
        return r;
    }();
    return s;
}

const Schema& chart_schema() {
    static const Schema s = [] {
        Schema c;
        c.add("eps", 0.2, "length", "chart margin beyond the domain; negative: 5% of the ray length");
        c.add("delta_prime", 0.1, "length", "tube radius; negative: default rule");
        return c;
    }();
    return s;
}

const Schema& inversion_schema() {
    static const Schema s = [] {
        Schema i;
        i.add("h", 0.05, "length", "spatial step of the inversion grid", true);
        i.add("dt", 0.05, "time", "time step of the inversion grid", true);
        i.add("lambda", -1.0, "", "gradient penalty weight; negative: discrepancy sweep");
        i.add("time_weight", 1.0, "", "weight of time differences in the penalty", true);
        i.add("noise", 0.0, "", "relative Gaussian noise added to the line integrals");
        return i;
    }();
    return s;
}

const Schema& source_schema() {
    static const Schema s = [] {
        Schema p;
        p.add("amp", 1e-2, "", "Dirichlet pulse amplitude");
        p.add("t_center", 0.5, "time", "pulse center", true);
        p.add("t_width", 0.1, "time", "pulse width", true);
        return p;
    }();
    return s;
}

const Schema& picard_schema() {
    static const Schema s = [] {
        Schema p;
        p.add("tol", 1e-12, "", "fixed-point tolerance", true);
        p.add("max_iter", 60, "", "iteration cap", true);
        return p;
    }();
    return s;
}

const Schema& ray_schema() {
    static const Schema s = [] {
        Schema r;
        r.add("x0", json::array({0.0}), "length", "entry point on the boundary");
        r.add("v", json::array({1.0}), "", "inward direction (normalized in g)");
        r.add("s", 0.5, "time", "entry time");
        return r;
    }();
    return s;
}

const Schema& point_schema() {
    static const Schema s = [] {
        Schema p;
        p.add("p", json::array({0.5, 0.5}), "length", "spatial point");
        p.add("t0", 1.3, "time", "time of the interaction point", true);
        p.add("m_known", 6.0, "", "known cubic coefficient at the point (calibration only)");
        return p;
    }();
    return s;
}

const Schema& fields_schema() {
    static const Schema s = [] {
        Schema f;
        f.add("centers", json::array({json::array({0.3}), json::array({0.5}), json::array({0.7})}), "length",
              "interior bump centers of the test fields");
        f.add("width", 0.1, "length", "bump width", true);
        f.add("h", 1.0 / 400.0, "length", "spatial step of the test grid", true);
        f.add("dt_ratio", 0.5, "", "dt / h", true);
        f.add("q", 1.0, "", "constant potential in the operator");
        return f;
    }();
    return s;
}

const Schema& stability_schema() {
    static const Schema s = [] {
        Schema st;
        st.add("h", 1.0 / 400.0, "length", "spatial step", true);
        st.add("cfl", 0.9, "", "Courant number", true);
        st.add("q1", 0.5, "", "constant potential of f1");
        st.object("q_shape", coefficient_schema(), "shape of the potential perturbation");
        st.add("mu_const", 1.0, "", "initial value mu(x) = mu_const + mu_slope x");
        st.add("mu_slope", 0.5, "", "slope of mu");
        st.add("alphas", json::array({1.0, 0.5, 0.25, 0.125, 0.0625}), "", "perturbation sizes", true);
        return st;
    }();
    return s;
}

struct KindInfo {
    Schema schema;
    Defaults defaults;  // overrides of nested defaults
    std::string notes;
};

void common_keys(Schema& s) {
    s.choice("kind", "forward",
             {"forward", "beam", "probe", "recover-b", "recover-q", "recover-cubic", "raytransform", "carleman"},
             "experiment kind");
    s.add("output", "out", "", "artifact directory");
    s.add("seed", 0, "", "random seed (noise)");
}

const std::map<std::string, KindInfo>& kind_table() {
    static const std::map<std::string, KindInfo> table = [] {
        std::map<std::string, KindInfo> t;
        {
            KindInfo k;
            common_keys(k.schema);
            k.schema.object("domain", domain_schema(), "spatial domain");
            k.schema.object("metric", metric_schema(), "spatial metric");
            k.schema.object("grid", grid_schema(), "solver grid");
            k.schema.object("coefficients", coefficients_schema(), "equation coefficients");
            k.schema.object("source", source_schema(), "Dirichlet pulse on the whole boundary");
            k.schema.object("picard", picard_schema(), "fixed-point iteration");
            k.schema.add("write_field", true, "", "write u.bin");
            k.defaults = {{"grid", {{"h", 0.01}, {"T", 2.0}}}, {"coefficients", {{"f3", {{"type", "constant"}, {"value", 1.0}}}}}};
            k.notes = "Solves the semilinear problem with zero Cauchy data; reports Picard contraction and the Neumann trace.";
            t["forward"] = k;
        }
        {
            KindInfo k;
            common_keys(k.schema);
            k.schema.object("domain", domain_schema(), "spatial domain");
            k.schema.object("metric", metric_schema(), "spatial metric");
            k.schema.object("grid", grid_schema(), "grid for residual quadrature");
            k.schema.object("coefficients", coefficients_schema(), "b and q of the operator");
            k.schema.object("ray", ray_schema(), "null geodesic (entry point, direction, time)");
            k.schema.object("chart", chart_schema(), "Fermi chart margins");
            k.schema.add("sigma", 64.0, "1/length", "beam frequency", true);
            k.schema.add("kappa", 1.0, "", "H0 = i kappa I", true);
            k.schema.choice("beam_kind", "forward", {"forward", "adjoint"}, "equation solved by the beam");
            k.defaults = {{"grid", {{"T", 2.0}}}, {"chart", {{"eps", -1.0}, {"delta_prime", -1.0}}}};
            k.notes = "Builds one Gaussian beam and reports its normalized residual and Riccati diagnostics.";
            t["beam"] = k;
        }
        auto probe_like = [](KindInfo& k) {
            common_keys(k.schema);
            k.schema.object("domain", domain_schema(), "spatial domain");
            k.schema.object("metric", metric_schema(), "spatial metric");
            k.schema.object("grid", grid_schema(), "solver grid");
            k.schema.object("truth", coefficients_schema(), "coefficients of the first oracle");
            k.schema.object("reference", coefficients_schema(), "coefficients of the second (known) oracle");
            k.schema.object("rays", rays_schema(), "ray family");
            k.schema.object("chart", chart_schema(), "Fermi chart margins");
            k.schema.add("sigmas", json::array({64.0, 128.0, 256.0, 512.0}), "1/length", "beam frequencies (>= 4)", true);
            k.schema.add("eps", 1e-3, "", "finite-difference step in the input amplitude", true);
            k.schema.add("kappa", 1.0, "", "H0 = i kappa I", true);
        };
        const json bump_b = {{"type", "bump"}, {"amp", 0.5}, {"center", {0.5}}, {"width", {0.15}},
                             {"t_center", 2.0}, {"t_width", 0.3}};
        {
            KindInfo k;
            probe_like(k);
            k.schema.choice("mode", "damping", {"damping", "potential"}, "probed coefficient");
            k.defaults = {{"grid", {{"h", 1.0 / 1800.0}}}, {"truth", {{"b", bump_b}}},
                          {"rays", {{"s_lo", 1.0}, {"s_hi", 1.5}, {"n_per_end", 2}}}};
            k.notes = "Beam probes of the trace difference; writes per-sigma values and line integrals.";
            t["probe"] = k;
        }
        for (const char* name : {"recover-b", "recover-q"}) {
            KindInfo k;
            probe_like(k);
            k.schema.object("inversion", inversion_schema(), "ray-transform inversion");
            const bool is_b = std::string(name) == "recover-b";
            k.defaults = {{"grid", {{"h", 1.0 / 1800.0}}}, {"truth", {{is_b ? "b" : "q", bump_b}}}};
            k.notes = std::string("Probes every ray, then inverts the light-ray transform for ") +
                      (is_b ? "b1 - b2" : "q1 - q2") + ". The recovered field is reference + difference.";
            t[name] = k;
        }
        {
            KindInfo k;
            common_keys(k.schema);
            k.schema.object("domain", domain_schema(), "spatial domain (2D)");
            k.schema.object("metric", metric_schema(), "spatial metric");
            k.schema.object("grid", grid_schema(), "solver grid");
            k.schema.object("truth", coefficients_schema(), "coefficients of the measured medium (b must vanish)");
            k.schema.object("calibration", point_schema(), "point with known m used for calibration");
            k.schema.object("target", point_schema(), "point where m is recovered");
            k.schema.add("theta", 0.0, "", "receiver covector parameter");
            k.schema.add("theta_tilde", 0.95, "", "spread of the two symmetric inputs", true);
            k.schema.add("sigmas", json::array({48.0, 64.0, 80.0, 96.0}), "1/length", "base frequencies", true);
            k.schema.add("eps", 0.05, "", "third-order stencil step", true);
            k.schema.add("kappa", 0.0, "", "transverse Im H at the waist; 0: 1/(2 tau_p) per beam");
            k.schema.add("chart_eps", 0.5, "length", "chart margin", true);
            k.schema.add("delta_prime", 0.45, "length", "tube radius", true);
            const json rect = {{"type", "rectangle"}, {"bounds", {0.0, 1.0, 0.0, 1.0}}};
            k.defaults = {{"domain", rect},
                          {"grid", {{"h", 1.0 / 128.0}, {"T", 2.7}, {"cfl", 0.6}}},
                          {"truth", {{"f3", {{"type", "constant"}, {"value", 6.0}}}}},
                          {"target", {{"p", {0.45, 0.55}}}}};
            k.notes =
                "Calibration: the stationary-phase constant is measured on a medium with constant f3 = "
                "calibration.m_known at calibration.p, then the target value is scaled by it. Both points need "
                "t0 > 0 with every beam's entry time positive and the chart inside [0, T].";
            t["recover-cubic"] = k;
        }
        {
            KindInfo k;
            common_keys(k.schema);
            k.schema.object("domain", domain_schema(), "spatial domain");
            k.schema.object("metric", metric_schema(), "spatial metric");
            k.schema.object("phantom", coefficient_schema(), "space-time phantom");
            k.schema.object("rays", rays_schema(), "ray family");
            k.schema.object("inversion", inversion_schema(), "inversion grid and regularization");
            k.schema.add("T", 4.0, "time", "time horizon", true);
            const json disk = {{"type", "disk"}, {"center", {0.0, 0.0}}, {"radius", 0.5}};
            const json ph = {{"type", "bump"}, {"amp", 1.0}, {"center", {0.0, 0.0}}, {"width", {0.2, 0.2}},
                             {"t_center", 2.0}, {"t_width", 0.4}};
            k.defaults = {{"domain", disk}, {"phantom", ph},
                          {"inversion", {{"h", 0.125}, {"dt", 0.25}, {"lambda", 8e-5}}}};
            k.notes = "Samples the light-ray transform of the phantom, optionally adds noise, and inverts it on the "
                      "masked inversion grid.";
            t["raytransform"] = k;
        }
        {
            KindInfo k;
            common_keys(k.schema);
            k.schema.object("domain", domain_schema(), "spatial domain");
            k.schema.add("x0", json::array({-0.5}), "length", "weight center, outside the closed domain");
            k.schema.add("beta", 0.7, "", "time coefficient, 0 < beta < rho", true);
            k.schema.add("beta0", 0.0, "", "weight offset; <= 0 picks beta T^2 - min psi + 1");
            k.schema.add("lambda", 0.5, "", "weight exponent", true);
            k.schema.add("T", 2.0, "time", "half-length of the time interval; must exceed T*", true);
            k.schema.add("samples", 401, "", "sampling points per axis for the weight margins", true);
            k.schema.add("s_list", json::array({0.5, 1.0, 2.0, 4.0, 8.0, 16.0}), "", "Carleman parameters", true);
            k.schema.add("s0", 2.0, "", "monotonicity is checked for s >= s0", true);
            k.schema.object("fields", fields_schema(), "test fields for the ratio");
            k.schema.object("stability", stability_schema(), "Lipschitz stability experiment");
            k.defaults = {{"stability", {{"q_shape", {{"type", "bump"}, {"amp", 1.0}, {"center", {0.5}},
                                                      {"width", {0.15}}}}}}};
            k.notes = "Constraints: x0 outside the closed domain, 0 < beta < rho, T > T* = max psi^(1/2) / "
                      "beta^(1/2) and beta T^2 > max psi.";
            t["carleman"] = k;
        }
        return t;
    }();
    return table;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

const char* type_name(const json& j) {
    if (j.is_boolean()) return "boolean";
    if (j.is_number()) return "number";
    if (j.is_string()) return "string";
    if (j.is_array()) return "array";
    if (j.is_object()) return "object";
    return "null";
}

bool same_type(const json& def, const json& v) {
    if (def.is_number()) return v.is_number() && !v.is_boolean();
    return std::string(type_name(def)) == type_name(v);
}

void check_positive(const json& v, const std::string& path) {
    if (v.is_number()) {
        if (!(v.get<double>() > 0.0)) throw ConfigError("config", "key '" + path + "' must be positive");
    } else if (v.is_array()) {
        for (const auto& e : v) check_positive(e, path);
    }
}

json resolve(const Schema& schema, const json& given, const json& overrides, const std::string& prefix) {
    if (!given.is_object()) throw ConfigError("config", "key '" + prefix + "' must be an object");
    const auto names = schema.names();
    for (auto it = given.begin(); it != given.end(); ++it) {
        if (std::find(names.begin(), names.end(), it.key()) != names.end()) continue;
        std::string msg = "unknown key '" + prefix + it.key() + "'";
        const std::string s = suggest(it.key(), names);
        if (!s.empty()) msg += "; did you mean '" + prefix + s + "'?";
        throw ConfigError("config", msg);
    }
    json out = json::object();
    for (const auto& k : schema.keys) {
        const std::string path = prefix + k.name;
        const json ov = overrides.is_object() && overrides.contains(k.name) ? overrides[k.name] : json();
        if (k.sub) {
            const json g = given.contains(k.name) ? given[k.name] : json::object();
            out[k.name] = resolve(*k.sub, g, ov, path + ".");
            continue;
        }
        json v = given.contains(k.name) ? given[k.name] : (ov.is_null() ? k.def : ov);
        if (!same_type(k.def, v))
            throw ConfigError("config", "key '" + path + "' must be a " + type_name(k.def) + ", got " + type_name(v));
        if (k.def.is_array() && !k.def.empty())
            for (const auto& e : v)
                if (!same_type(k.def[0], e))
                    throw ConfigError("config", "elements of '" + path + "' must be " + type_name(k.def[0]) + "s");
        if (!k.choices.empty() &&
            std::find(k.choices.begin(), k.choices.end(), v.get<std::string>()) == k.choices.end()) {
            std::string msg = "key '" + path + "' has invalid value '" + v.get<std::string>() + "'";
            const std::string s = suggest(v.get<std::string>(), k.choices);
            if (!s.empty()) msg += "; did you mean '" + s + "'?";
            throw ConfigError("config", msg);
        }
        if (k.positive) check_positive(v, path);
        out[k.name] = v;
    }
    return out;
}

const KindInfo& kind_info(const std::string& kind) {
    const auto& t = kind_table();
    const auto it = t.find(kind);
    if (it == t.end()) {
        std::string msg = "unknown kind '" + kind + "'";
        const std::string s = suggest(kind, kinds());
        if (!s.empty()) msg += "; did you mean '" + s + "'?";
        throw ConfigError("config", msg);
    }
    return it->second;
}

json resolve_json(const json& given) {
    if (!given.is_object()) throw ConfigError("config", "config must be a JSON object");
    if (!given.contains("kind") || !given["kind"].is_string()) throw ConfigError("config", "key 'kind' is required");
    const KindInfo& info = kind_info(given["kind"].get<std::string>());
    return resolve(info.schema, given, info.defaults, "");
}

// ---------------------------------------------------------------- builders

std::vector<double> numbers(const json& j) { return j.get<std::vector<double>>(); }

Vec2 vec(const json& j, int dim, const std::string& key) {
    const auto v = numbers(j);
    if (static_cast<int>(v.size()) != dim)
        throw ConfigError("config", "key '" + key + "' needs " + std::to_string(dim) + " entries");
    return Vec2(v[0], dim == 2 ? v[1] : 0.0);
}

Domain make_domain(const json& j) {
    const std::string type = j["type"];
    const auto b = numbers(j["bounds"]);
    if (type == "interval") {
        if (b.size() != 2) throw ConfigError("config", "key 'domain.bounds' needs 2 entries for an interval");
        if (!(b[1] > b[0])) throw ConfigError("config", "key 'domain.bounds' must be increasing");
        return Domain::interval(b[0], b[1]);
    }
    if (type == "rectangle") {
        if (b.size() != 4) throw ConfigError("config", "key 'domain.bounds' needs 4 entries for a rectangle");
        if (!(b[1] > b[0] && b[3] > b[2])) throw ConfigError("config", "key 'domain.bounds' must be increasing");
        return Domain::rectangle(b[0], b[1], b[2], b[3]);
    }
    return Domain::disk(vec(j["center"], 2, "domain.center"), j["radius"].get<double>());
}

Metric make_metric(const Domain& d, const json& j) {
    if (j["type"] == "euclidean") return Metric::euclidean(d);
    const int axis = j["axis"].get<int>();
    if (axis < 0 || axis >= d.dim()) throw ConfigError("config", "key 'metric.axis' is out of range");
    const double amp = j["amp"].get<double>();
    if (!(std::abs(amp) < 1.0)) throw ConfigError("config", "key 'metric.amp' must satisfy |amp| < 1");
    return Metric::conformal(d, ConformalFactor::sine(amp, j["k"].get<double>(), axis), j["padding"].get<double>());
}

struct BumpSpec {
    double amp = 0.0, tc = 0.0, tw = 0.0;
    Vec2 c = Vec2::Zero(), w = Vec2::Ones();
    int dim = 1;

    double operator()(double t, const Vec2& x) const {
        double r2 = 0.0;
        for (int i = 0; i < dim; ++i) r2 += std::pow((x[i] - c[i]) / w[i], 2);
        if (tw > 0.0) r2 += std::pow((t - tc) / tw, 2);
        return amp * std::exp(-0.5 * r2) * smooth_cutoff(std::sqrt(r2) / 3.0);
    }
};

Coefficient make_coefficient(const json& j, int dim, const std::string& key) {
    const std::string type = j["type"];
    if (type == "zero") return Coefficient::none();
    if (type == "constant") return Coefficient::constant(j["value"].get<double>());
    BumpSpec b;
    b.dim = dim;
    b.amp = j["amp"].get<double>();
    b.c = vec(j["center"], dim, key + ".center");
    b.w = vec(j["width"], dim, key + ".width");
    if (dim == 1) b.w.y() = 1.0;
    b.tc = j["t_center"].get<double>();
    b.tw = j["t_width"].get<double>();
    if (b.tw > 0.0) return Coefficient::spacetime(b);
    return Coefficient::spatial([b](const Vec2& x) { return b(0.0, x); });
}

SemilinearSpec make_spec(const Metric& m, const json& c, const std::string& key) {
    SemilinearSpec s;
    s.metric = m;
    s.b = make_coefficient(c["b"], m.dim(), key + ".b");
    s.q = make_coefficient(c["q"], m.dim(), key + ".q");
    s.f2 = make_coefficient(c["f2"], m.dim(), key + ".f2");
    s.f3 = make_coefficient(c["f3"], m.dim(), key + ".f3");
    return s;
}

Grid make_solver_grid(const Domain& d, const Metric& m, const json& g) {
    const double cmin = m.c_min_sampled();
    return Grid::for_domain(d, g["h"].get<double>(), g["T"].get<double>(), g["cfl"].get<double>(), 1.0 / cmin);
}

// Box grid with steps (h, dt) over the domain's bounding box and [0, T].
Grid make_box_grid(const Domain& d, double h, double dt, double T) {
    const Vec2 lo = d.lo(), hi = d.hi();
    const int nx = static_cast<int>(std::lround((hi.x() - lo.x()) / h)) + 1;
    const int ny = d.dim() == 2 ? static_cast<int>(std::lround((hi.y() - lo.y()) / h)) + 1 : 1;
    const int nt = static_cast<int>(std::lround(T / dt));
    if (nx < 3 || ny < (d.dim() == 2 ? 3 : 1) || nt < 2) throw ConfigError("config", "inversion grid is too coarse");
    return Grid(d.dim(), lo.x(), lo.y(), (hi.x() - lo.x()) / (nx - 1), nx, ny, 0.0, T / nt, nt);
}

RayFamily make_family(const Metric& m, const json& r) {
    if (m.dim() == 1) {
        const int n = r["n_per_end"].get<int>();
        const double lo = r["s_lo"].get<double>(), hi = r["s_hi"].get<double>();
        if (hi < lo) throw ConfigError("config", "key 'rays.s_hi' must not be below 'rays.s_lo'");
        std::vector<double> s;
        for (int i = 0; i < n; ++i) s.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1.0));
        return make_ray_family_1d(m, s, s, r["step"].get<double>());
    }
    FamilySpec fs;
    fs.n_points = r["n_points"].get<int>();
    fs.n_dirs = r["n_dirs"].get<int>();
    fs.n_s = r["n_s"].get<int>();
    fs.t_mid_lo = r["t_mid_lo"].get<double>();
    fs.t_mid_hi = r["t_mid_hi"].get<double>();
    fs.grazing = r["grazing"].get<double>();
    fs.step = r["step"].get<double>();
    return make_ray_family(m, fs);
}

struct Artifacts {
    fs::path dir;
    json metrics = json::object();
    json files = json::array();
    std::vector<std::pair<std::string, double>> timing;

    void csv(const std::string& name, const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
        write_csv((dir / name).string(), header, rows);
        files.push_back(name);
    }
    void text(const std::string& name, const std::string& s) {
        write_text((dir / name).string(), s);
        files.push_back(name);
    }
    void field(const std::string& name, const std::vector<double>& v, const FieldMeta& meta) {
        write_field((dir / name).string(), v, meta);
        files.push_back(name);
        files.push_back(name + ".json");
    }
};

class Stage {
public:
    Stage(Artifacts& a, std::string name) : a_(a), name_(std::move(name)), t0_(std::chrono::steady_clock::now()) {}
    ~Stage() {
        a_.timing.emplace_back(name_, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count());
    }

private:
    Artifacts& a_;
    std::string name_;
    std::chrono::steady_clock::time_point t0_;
};

// ---------------------------------------------------------------- pipelines

void run_forward(const json& c, Artifacts& a) {
    const Domain d = make_domain(c["domain"]);
    const Metric m = make_metric(d, c["metric"]);
    const Grid g = make_solver_grid(d, m, c["grid"]);
    const SemilinearSpec spec = make_spec(m, c["coefficients"], "coefficients");
    const double amp = c["source"]["amp"], tc = c["source"]["t_center"], tw = c["source"]["t_width"];
    std::function<double(double, const Vec2&)> pulse = [=](double t, const Vec2&) {
        return amp * std::exp(-std::pow((t - tc) / tw, 2)) * smooth_step(t / tc);
    };
    const auto h = boundary_from_function<double>(g, pulse);
    PicardOptions po;
    po.tol = c["picard"]["tol"];
    po.max_iter = c["picard"]["max_iter"];
    SolverContext ctx(spec, g);
    Solution<double> sol;
    {
        Stage st(a, "solve");
        sol = solve_semilinear<double>(ctx, &h, nullptr, nullptr, po);
    }
    double ratio_max = 0.0;
    for (std::size_t i = 1; i < sol.ratios.size(); ++i) ratio_max = std::max(ratio_max, sol.ratios[i]);
    a.metrics["picard_iterations"] = sol.iterations;
    a.metrics["max_contraction_ratio"] = ratio_max;
    a.metrics["fixed_point_residual"] = sol.residual;
    a.metrics["sup_u"] = sup_norm(sol.field.data);
    a.metrics["trace_l2"] = trace_norm(g, sol.trace);
    a.metrics["energy_final"] = discrete_energy(sol.field, ctx, g.levels() - 2);
    std::vector<std::vector<double>> rows;
    const auto& samples = g.boundary_samples();
    for (std::size_t k = 0; k < sol.trace.levels; ++k)
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const Vec2 p = g.point(samples[i].node);
            rows.push_back({g.t(static_cast<int>(k)), static_cast<double>(i), p.x(), p.y(), sol.trace(k, i)});
        }
    a.csv("trace.csv", {"t", "sample", "x", "y", "dnu_u"}, rows);
    std::vector<std::vector<double>> ratios;
    for (std::size_t i = 0; i < sol.ratios.size(); ++i) ratios.push_back({static_cast<double>(i + 1), sol.ratios[i]});
    a.csv("contraction.csv", {"iteration", "ratio"}, ratios);
    if (c["write_field"].get<bool>()) a.field("u.bin", sol.field.data, grid_meta(g, "u"));
}

void run_beam(const json& c, Artifacts& a) {
    const Domain d = make_domain(c["domain"]);
    const Metric m = make_metric(d, c["metric"]);
    const Grid g = make_solver_grid(d, m, c["grid"]);
    const SemilinearSpec spec = make_spec(m, c["coefficients"], "coefficients");
    const int n = m.dim();
    const Vec2 x0 = vec(c["ray"]["x0"], n, "ray.x0");
    Vec2 v = vec(c["ray"]["v"], n, "ray.v");
    if (!(v.norm() > 0)) throw ConfigError("config", "key 'ray.v' must be non-zero");
    v /= m.norm(x0, v);
    const NullGeodesic beta = make_null_geodesic(m, c["ray"]["s"].get<double>(), x0, v);
    ChartOptions co;
    co.eps = c["chart"]["eps"];
    co.delta_prime = c["chart"]["delta_prime"];
    co.T = g.T();
    const FermiChart chart(beta, co);
    const CMat H0 = cplx(0.0, c["kappa"].get<double>()) * CMat::Identity(n, n);
    const BeamKind kind = c["beam_kind"] == "forward" ? BeamKind::forward : BeamKind::adjoint;
    Beam beam;
    ResidualReport rr;
    {
        Stage st(a, "beam");
        beam = make_beam(chart, H0, spec.b, c["sigma"].get<double>(), kind);
    }
    {
        Stage st(a, "residual");
        if (kind == BeamKind::forward) {
            rr = beam_residual(beam, spec.b, spec.q, g);
        } else {
            // adjoint operator: damping −b, potential q − b_t
            const Coefficient b = spec.b;
            Coefficient qa = spec.q;
            if (!b.zero && b.time_dependent)
                qa = qa + Coefficient::spacetime([b](double t, const Vec2& x) {
                         const double e = 1e-4;
                         return (b(t - e, x) - b(t + e, x)) / (2.0 * e);
                     });
            rr = beam_residual(beam, b.scaled(-1.0), qa, g);
        }
    }
    a.metrics["residual_l2"] = rr.residual_l2;
    a.metrics["beam_l2"] = rr.beam_l2;
    a.metrics["normalized_residual"] = rr.normalized;
    a.metrics["eikonal_axis"] = rr.eikonal_axis;
    a.metrics["transport_axis"] = rr.transport_axis;
    a.metrics["riccati_conservation_error"] = beam.riccati().conservation_error();
    a.metrics["riccati_symmetry_error"] = beam.riccati().symmetry_error();
    a.metrics["min_imag_eig"] = beam.riccati().min_imag_eig();
    a.metrics["tube_nodes"] = rr.tube_nodes;
    a.text("beam_diagnostics.csv", beam_diagnostics_csv(beam));
    const CField u = beam.sample(g);
    std::vector<double> mag(u.data.size());
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(u.data[i]);
    a.field("beam_abs.bin", mag, grid_meta(g, "beam_abs"));
}

struct ProbeSetup {
    Domain d = Domain::interval(0, 1);
    Metric m = Metric::euclidean(Domain::interval(0, 1));
    Grid g;
    SemilinearSpec s1, s2;
    RayFamily fam;
    RecoveryOptions opt;
};

ProbeSetup probe_setup(const json& c) {
    ProbeSetup p;
    p.d = make_domain(c["domain"]);
    p.m = make_metric(p.d, c["metric"]);
    p.g = make_solver_grid(p.d, p.m, c["grid"]);
    p.s1 = make_spec(p.m, c["truth"], "truth");
    p.s2 = make_spec(p.m, c["reference"], "reference");
    p.fam = make_family(p.m, c["rays"]);
    p.opt.sigmas = numbers(c["sigmas"]);
    if (p.opt.sigmas.size() < 4) throw ConfigError("config", "key 'sigmas' needs at least four values");
    p.opt.eps = c["eps"];
    p.opt.chart.eps = c["chart"]["eps"];
    p.opt.chart.delta_prime = c["chart"]["delta_prime"];
    const int n = p.m.dim();
    p.opt.H0 = cplx(0.0, c["kappa"].get<double>()) * CMat::Identity(n, n);
    return p;
}

Coefficient difference(const Coefficient& a, const Coefficient& b) { return a + b.scaled(-1.0); }

void write_probes(const std::vector<ProbeResult>& probes, const RayFamily& fam, const std::vector<double>& direct,
                  Artifacts& a) {
    a.text("probes.csv", probe_table_csv(probes));
    std::vector<std::vector<double>> rows;
    double gmax = 0.0, emax = 0.0;
    for (double v : direct) gmax = std::max(gmax, std::abs(v));
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const auto& r = fam.rays[i];
        rows.push_back({static_cast<double>(i), r.s, r.geodesic.x0.x(), r.geodesic.v0.x(), probes[i].line_integral,
                        direct[i], probes[i].fit.residual});
        emax = std::max(emax, std::abs(probes[i].line_integral - direct[i]));
    }
    a.csv("line_integrals.csv", {"ray_id", "s", "x0", "v0", "measured", "direct", "fit_residual"}, rows);
    a.metrics["rays"] = probes.size();
    a.metrics["max_ray_error"] = emax;
    a.metrics["max_ray_error_rel"] = gmax > 0 ? emax / gmax : emax;
}

void run_probe(const json& c, Artifacts& a) {
    ProbeSetup p = probe_setup(c);
    const bool damping = c["mode"] == "damping";
    const DtNOracle o1(p.s1, p.g, {}, 0), o2(p.s2, p.g, {}, 0);
    std::vector<ProbeResult> probes;
    {
        Stage st(a, "probe");
        probes = probe_family(o1, o2, p.fam, damping ? ProbeMode::damping : ProbeMode::potential, p.opt);
    }
    const Coefficient diff = damping ? difference(p.s1.b, p.s2.b) : difference(p.s1.q, p.s2.q);
    const auto direct = light_ray_transform([&](double t, const Vec2& x) { return diff(t, x); }, p.fam);
    write_probes(probes, p.fam, direct, a);
    a.metrics["oracle_evaluations"] = o1.evaluations() + o2.evaluations();
}

void run_recover(const json& c, Artifacts& a, bool is_b) {
    ProbeSetup p = probe_setup(c);
    const json& inv = c["inversion"];
    const Grid gi = make_box_grid(p.d, inv["h"], inv["dt"], p.g.T());
    const InfluenceMasks im = influence_sets(p.m, gi, p.g.T());
    const RayOperator op = build_ray_operator(gi, p.fam, im.E);
    p.opt.inversion.lambda = inv["lambda"];
    p.opt.inversion.time_weight = inv["time_weight"];
    if (inv["noise"].get<double>() != 0.0)
        throw ConfigError("config", "key 'inversion.noise' is only supported by kind raytransform");
    const DtNOracle o1(p.s1, p.g, {}, 0), o2(p.s2, p.g, {}, 0);
    RecoveryResult r;
    {
        Stage st(a, "recover");
        r = is_b ? recover_b(o1, o2, p.fam, op, p.opt) : recover_q(o1, o2, p.fam, op, p.opt);
    }
    const Coefficient diff = is_b ? difference(p.s1.b, p.s2.b) : difference(p.s1.q, p.s2.q);
    const SpaceTimeFn fd = [&](double t, const Vec2& x) { return diff(t, x); };
    const auto direct = light_ray_transform(fd, p.fam);
    write_probes(r.probes, p.fam, direct, a);
    const auto truth = op.expand(op.sample(fd));
    a.metrics["rel_l2_error"] = relative_l2(op, r.difference, truth);
    a.metrics["lambda"] = r.inversion.lambda;
    a.metrics["data_residual"] = r.inversion.residual;
    a.metrics["cg_iterations"] = r.inversion.iterations;
    a.metrics["unknowns"] = op.cols();
    a.metrics["min_coverage"] = op.min_coverage();
    const std::string name = is_b ? "b_hat" : "q_hat";
    write_field_csv((a.dir / (name + ".csv")).string(), gi, r.field, name);
    a.files.push_back(name + ".csv");
    a.field(name + ".bin", r.field, grid_meta(gi, name));
    a.field("difference.bin", r.difference, grid_meta(gi, "difference"));
}

json phase_json(const PhaseDiagnostics& p) {
    return {{"S_at_p", std::abs(p.S_at_p)},
            {"grad_norm", p.grad_norm},
            {"min_imag_ratio", p.min_imag_ratio},
            {"sqrt_det_re", p.sqrt_det.real()},
            {"sqrt_det_im", p.sqrt_det.imag()}};
}

void cubic_rows(const CubicResult& r, double id, std::vector<std::vector<double>>& rows) {
    for (std::size_t i = 0; i < r.sigmas.size(); ++i)
        rows.push_back({id, r.sigmas[i], r.pairings[i].real(), r.pairings[i].imag(), r.scaled[i].real(),
                        r.scaled[i].imag()});
}

void run_cubic(const json& c, Artifacts& a) {
    const Domain d = make_domain(c["domain"]);
    if (d.dim() != 2) throw ConfigError("config", "key 'domain.type' must be two dimensional for recover-cubic");
    const Metric m = make_metric(d, c["metric"]);
    const Grid g = make_solver_grid(d, m, c["grid"]);
    const SemilinearSpec truth = make_spec(m, c["truth"], "truth");
    SemilinearSpec calib = truth;
    const json& cal = c["calibration"];
    const json& tgt = c["target"];
    const double m_known = cal["m_known"];
    if (m_known == 0.0) throw ConfigError("config", "key 'calibration.m_known' must be non-zero");
    calib.f3 = Coefficient::constant(m_known);
    CubicOptions opt;
    opt.sigmas = numbers(c["sigmas"]);
    opt.eps = c["eps"];
    opt.kappa = c["kappa"];
    opt.chart_eps = c["chart_eps"];
    opt.delta_prime = c["delta_prime"];
    const double theta = c["theta"], tt = c["theta_tilde"];
    const ConeQuadruple q0 = cone_quadruple(cal["t0"], vec(cal["p"], 2, "calibration.p"), theta, tt);
    const ConeQuadruple q1 = cone_quadruple(tgt["t0"], vec(tgt["p"], 2, "target.p"), theta, tt);
    CubicResult ref, res;
    {
        Stage st(a, "calibration");
        const DtNOracle oc(calib, g, {}, 0);
        ref = cubic_probe(oc, q0, opt);
    }
    const cplx cst = calibrate_cubic(ref, m_known);
    {
        Stage st(a, "target");
        const DtNOracle ot(truth, g, {}, 0);
        res = recover_cubic(ot, q1, cst, opt);
    }
    const double m_true = truth.f3(q1.t0, q1.x0);
    a.metrics["m_hat"] = res.m_hat;
    a.metrics["m_true"] = m_true;
    a.metrics["abs_error"] = std::abs(res.m_hat - m_true);
    if (m_true != 0.0) a.metrics["rel_error"] = std::abs(res.m_hat - m_true) / std::abs(m_true);
    a.metrics["calibration_re"] = cst.real();
    a.metrics["calibration_im"] = cst.imag();
    a.metrics["target_limit_re"] = res.limit.real();
    a.metrics["target_limit_im"] = res.limit.imag();
    a.metrics["quadruple_null_defect"] = std::max(q0.null_defect(), q1.null_defect());
    a.metrics["quadruple_balance_defect"] = std::max(q0.balance_defect(), q1.balance_defect());
    a.metrics["phase_calibration"] = phase_json(ref.phase);
    a.metrics["phase_target"] = phase_json(res.phase);
    std::vector<std::vector<double>> rows;
    cubic_rows(ref, 0.0, rows);
    cubic_rows(res, 1.0, rows);
    a.csv("cubic.csv", {"point", "sigma", "pairing_re", "pairing_im", "scaled_re", "scaled_im"}, rows);
}

void run_raytransform(const json& c, Artifacts& a, std::uint64_t seed) {
    const Domain d = make_domain(c["domain"]);
    const Metric m = make_metric(d, c["metric"]);
    const double T = c["T"];
    const Coefficient ph = make_coefficient(c["phantom"], m.dim(), "phantom");
    const SpaceTimeFn f = [&](double t, const Vec2& x) { return ph(t, x); };
    const RayFamily fam = make_family(m, c["rays"]);
    const json& inv = c["inversion"];
    const Grid gi = make_box_grid(d, inv["h"], inv["dt"], T);
    const InfluenceMasks im = influence_sets(m, gi, T);
    const RayOperator op = build_ray_operator(gi, fam, im.E);
    auto data = light_ray_transform(f, fam);
    const double noise = inv["noise"];
    InversionOptions io;
    io.lambda = inv["lambda"];
    io.time_weight = inv["time_weight"];
    if (noise != 0.0) {
        double rms = 0.0;
        for (double v : data) rms += v * v;
        rms = std::sqrt(rms / static_cast<double>(data.size()));
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n01(0.0, 1.0);
        for (double& v : data) v += noise * rms * n01(rng);
        io.noise_level = noise * rms;
    }
    InversionResult r;
    {
        Stage st(a, "invert");
        r = invert_ray_transform(op, data, io);
    }
    const auto truth = op.expand(op.sample(f));
    a.metrics["rays"] = fam.size();
    a.metrics["unknowns"] = op.cols();
    a.metrics["min_coverage"] = op.min_coverage();
    a.metrics["lambda"] = r.lambda;
    a.metrics["data_residual"] = r.residual;
    a.metrics["cg_iterations"] = r.iterations;
    a.metrics["rel_l2_error"] = relative_l2(op, r.field, truth);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < fam.size(); ++i) rows.push_back({static_cast<double>(i), fam.rays[i].s, data[i]});
    a.csv("data.csv", {"ray_id", "s", "value"}, rows);
    a.field("f_hat.bin", r.field, grid_meta(gi, "f_hat"));
    a.field("f_true.bin", truth, grid_meta(gi, "f_true"));
}

void run_carleman(const json& c, Artifacts& a) {
    const Domain d = make_domain(c["domain"]);
    const int n = d.dim();
    const double T = c["T"];
    const CarlemanWeight w = build_weight(d, vec(c["x0"], n, "x0"), c["beta"], c["beta0"], c["lambda"], T, c["samples"]);
    a.text("weight.json", w.to_json() + "\n");
    a.metrics["T_star"] = w.T_star;
    a.metrics["delta"] = w.delta;
    a.metrics["eps"] = w.eps;
    a.metrics["property1_margin"] = w.margin1;
    a.metrics["property2_margin"] = w.margin2;
    a.metrics["property1"] = w.property1();
    a.metrics["property2"] = w.property2();

    // test fields on [−T, T]
    const json& fj = c["fields"];
    const double h = fj["h"], dt = fj["dt_ratio"].get<double>() * h;
    const Vec2 lo = d.lo(), hi = d.hi();
    const int nx = static_cast<int>(std::lround((hi.x() - lo.x()) / h)) + 1;
    const int ny = n == 2 ? static_cast<int>(std::lround((hi.y() - lo.y()) / h)) + 1 : 1;
    const int nt = static_cast<int>(std::lround(2.0 * T / dt));
    const Grid g(n, lo.x(), lo.y(), (hi.x() - lo.x()) / (nx - 1), nx, ny, -T, 2.0 * T / nt, nt);
    const Cutoff chi = cutoff_chi(T, w.eps);
    const double width = fj["width"];
    const auto s_list = numbers(c["s_list"]);
    const double s0 = c["s0"];
    std::vector<std::vector<double>> rows;
    double worst_step = 0.0;
    int id = 0;
    {
        Stage st(a, "carleman_ratio");
        for (const auto& cj : fj["centers"]) {
            const Vec2 cc = vec(cj, n, "fields.centers");
            RField v(g, "v");
            for (std::size_t k = 0; k < g.levels(); ++k)
                for (std::size_t node = 0; node < g.nodes(); ++node) {
                    if (g.on_boundary(node) || d.signed_distance(g.point(node)) > -1e-12) continue;
                    const double r = (g.point(node) - cc).norm() / width;
                    v(k, node) = std::exp(-r * r) * smooth_cutoff(r / 3.0) * chi(g.t(static_cast<int>(k)));
                }
            const auto cr = carleman_ratio(v, Coefficient::none(), Coefficient::constant(fj["q"].get<double>()), w, s_list);
            for (std::size_t i = 0; i < cr.s.size(); ++i) {
                rows.push_back({static_cast<double>(id), cr.s[i], cr.lhs[i], cr.rhs[i], cr.ratio[i]});
                if (i > 0 && cr.s[i - 1] >= s0 && cr.ratio[i - 1] > 0)
                    worst_step = std::max(worst_step, cr.ratio[i] / cr.ratio[i - 1]);
            }
            ++id;
        }
    }
    a.csv("carleman_ratio.csv", {"field", "s", "lhs", "rhs", "ratio"}, rows);
    a.metrics["max_ratio_step_beyond_s0"] = worst_step;

    const json& sj = c["stability"];
    const Metric m = Metric::euclidean(d);
    const Grid gs = Grid::for_domain(d, sj["h"], T, sj["cfl"]);
    SemilinearSpec f1;
    f1.metric = m;
    f1.q = Coefficient::constant(sj["q1"].get<double>());
    const Coefficient qs = make_coefficient(sj["q_shape"], n, "stability.q_shape");
    if (qs.time_dependent) throw ConfigError("config", "key 'stability.q_shape.t_width' must be 0");
    const double mc = sj["mu_const"], ms = sj["mu_slope"];
    StabilityResult sr;
    {
        Stage st(a, "stability");
        sr = stability_experiment(f1, [qs](const Vec2& x) { return qs(0.0, x); },
                                  [mc, ms](const Vec2& x) { return mc + ms * x.x(); }, gs, numbers(sj["alphas"]));
    }
    a.text("stability.csv", sr.to_csv());
    a.metrics["stability_slope"] = sr.slope;
    a.metrics["even_extension_defect"] = sr.even_extension_defect;
    double cons = 0.0;
    for (const auto& r : sr.rows) cons = std::max(cons, r.y1_consistency);
    a.metrics["y1_consistency"] = cons;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("config", "cannot read config file " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

json parse(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config", std::string("invalid JSON: ") + e.what());
    }
}

std::string versions_compiler() {
#ifdef __VERSION__
    return __VERSION__;
#else
    return "unknown";
#endif
}

void describe_keys(const Schema& s, const json& overrides, const std::string& prefix, std::ostream& out) {
    for (const auto& k : s.keys) {
        const json ov = overrides.is_object() && overrides.contains(k.name) ? overrides[k.name] : json();
        if (k.sub) {
            out << "  " << prefix << k.name << ": " << k.doc << "\n";
            describe_keys(*k.sub, ov, prefix + k.name + ".", out);
            continue;
        }
        out << "  " << prefix << k.name;
        if (!k.unit.empty()) out << " [" << k.unit << "]";
        out << " = " << (ov.is_null() ? k.def : ov).dump();
        if (!k.choices.empty()) {
            out << " (one of";
            for (const auto& c : k.choices) out << " " << c;
            out << ")";
        }
        if (k.positive) out << " (> 0)";
        out << ": " << k.doc << "\n";
    }
}

}  // namespace

// ---------------------------------------------------------------- public API

const std::vector<std::string>& kinds() {
    static const std::vector<std::string> k{"forward",       "beam",         "probe",   "recover-b", "recover-q",
                                            "recover-cubic", "raytransform", "carleman"};
    return k;
}

std::string suggest(const std::string& key, const std::vector<std::string>& valid) {
    std::string best;
    std::size_t best_d = std::string::npos;
    for (const auto& v : valid) {
        // shared prefix of at least three characters wins outright
        std::size_t p = 0;
        while (p < key.size() && p < v.size() && key[p] == v[p]) ++p;
        const std::size_t d = p >= 3 && p == std::min(key.size(), v.size()) ? 0 : edit_distance(key, v);
        if (d < best_d) {
            best_d = d;
            best = v;
        }
    }
    if (best_d == std::string::npos || best_d > std::max<std::size_t>(2, key.size() / 2)) return "";
    return best;
}

std::string resolve_config(const std::string& text) { return resolve_json(parse(text)).dump(2); }

std::string example_config(const std::string& kind) {
    const KindInfo& info = kind_info(kind);
    json j = resolve(info.schema, json{{"kind", kind}}, info.defaults, "");
    j["output"] = "out/" + kind;
    return j.dump(2);
}

int run(const std::string& config_path, const std::string& out_dir, std::ostream& log) {
    try {
        const std::string text = read_file(config_path);
        const json cfg = resolve_json(parse(text));
        const std::string kind = cfg["kind"];
        Artifacts a;
        a.dir = out_dir.empty() ? fs::path(cfg["output"].get<std::string>()) : fs::path(out_dir);
        std::error_code ec;
        fs::create_directories(a.dir, ec);
        if (ec) throw ConfigError("config", "cannot create output directory " + a.dir.string());
        const auto seed = cfg["seed"].get<std::uint64_t>();
        const auto t0 = std::chrono::steady_clock::now();
        if (kind == "forward") run_forward(cfg, a);
        else if (kind == "beam") run_beam(cfg, a);
        else if (kind == "probe") run_probe(cfg, a);
        else if (kind == "recover-b") run_recover(cfg, a, true);
        else if (kind == "recover-q") run_recover(cfg, a, false);
        else if (kind == "recover-cubic") run_cubic(cfg, a);
        else if (kind == "raytransform") run_raytransform(cfg, a, seed);
        else run_carleman(cfg, a);
        const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const std::string resolved = cfg.dump();
        json report;
        report["kind"] = kind;
        report["metrics"] = a.metrics;
        report["files"] = a.files;
        report["provenance"] = {{"config_hash", hex64(fnv1a(text.data(), text.size()))},
                                {"resolved_config_hash", hex64(fnv1a(resolved.data(), resolved.size()))},
                                {"beamtomo", BEAMTOMO_VERSION},
                                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                              std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                              std::to_string(EIGEN_MINOR_VERSION)},
                                {"compiler", versions_compiler()}};
        report["config"] = cfg;
        write_text((a.dir / "report.json").string(), report.dump(2) + "\n");
        // wall-clock numbers stay out of report.json so that it is reproducible byte for byte
        json timing;
        for (const auto& [name, sec] : a.timing) timing["stages"][name] = sec;
        timing["total"] = total;
        timing["threads"] = threads();
        write_text((a.dir / "timing.json").string(), timing.dump(2) + "\n");
        log << "wrote " << (a.dir / "report.json").string() << "\n";
        return kOk;
    } catch (const Error& e) {
        if (e.is_config()) {
            log << "config error: " << e.what() << "\n";
            return kConfigError;
        }
        log << "stage '" << e.stage() << "' failed: " << e.what() << "\n";
        return kNumericFailure;
    } catch (const json::exception& e) {
        log << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        log << "failure: " << e.what() << "\n";
        return kNumericFailure;
    }
}

int describe(const std::string& kind, std::ostream& out) {
    try {
        const KindInfo& info = kind_info(kind);
        out << "kind " << kind << "\n" << info.notes << "\n\nkeys:\n";
        json ov = info.defaults;
        ov["kind"] = kind;
        describe_keys(info.schema, ov, "", out);
        out << "\nexample config:\n" << example_config(kind) << "\n";
        return kOk;
    } catch (const Error& e) {
        out << "config error: " << e.what() << "\n";
        return kConfigError;
    }
}

int selftest(std::ostream& out) {
    int failed = 0;
    auto check = [&](const std::string& name, bool ok, double value) {
        out << (ok ? "PASS " : "FAIL ") << name << " (" << value << ")\n";
        if (!ok) ++failed;
    };
    auto guarded = [&](const std::string& name, const std::function<void()>& body) {
        try {
            body();
        } catch (const std::exception& e) {
            out << "FAIL " << name << " threw: " << e.what() << "\n";
            ++failed;
        }
    };
    const Metric flat1 = Metric::euclidean(Domain::interval(0.0, 1.0));
    guarded("straight segment", [&] {
        const Geodesic g = trace_geodesic(flat1, Vec2(0, 0), Vec2(1, 0));
        check("straight segment exit time is 1", std::abs(g.tau_plus - 1.0) < 1e-8, g.tau_plus);
    });
    guarded("exit symmetry", [&] {
        const Geodesic a = trace_geodesic(flat1, Vec2(0.3, 0), Vec2(1, 0));
        const Geodesic b = trace_geodesic(flat1, Vec2(0.3, 0), Vec2(-1, 0));
        check("exit-time symmetry", std::abs(a.tau_plus + b.tau_plus - 1.0) < 1e-8, a.tau_plus + b.tau_plus);
    });
    guarded("fermi round trip", [&] {
        const NullGeodesic beta = make_null_geodesic(flat1, 0.5, Vec2(0, 0), Vec2(1, 0));
        ChartOptions co;
        const FermiChart ch(beta, co);
        double err = 0.0;
        for (double t : {0.6, 0.9, 1.2})
            for (double x : {0.1, 0.5, 0.8}) {
                Eigen::Vector3d z;
                if (!ch.to_fermi(t, Vec2(x, 0), z)) continue;
                double t2;
                Vec2 x2;
                ch.from_fermi(z, t2, x2);
                err = std::max({err, std::abs(t2 - t), std::abs(x2.x() - x)});
            }
        check("1+1D Fermi chart round trip", err < 1e-12, err);
    });
    guarded("riccati", [&] {
        const Metric flat2 = Metric::euclidean(Domain::rectangle(0, 1, 0, 1));
        const NullGeodesic beta = make_null_geodesic(flat2, 0.5, Vec2(0, 0.5), Vec2(1, 0));
        const FermiChart ch(beta, ChartOptions{});
        const RiccatiSolution r = solve_riccati(ch, cplx(0, 1) * CMat::Identity(2, 2));
        check("Riccati conservation", r.conservation_error() < 1e-6, r.conservation_error());
    });
    guarded("gaussian", [&] {
        RMat P(1, 1);
        P(0, 0) = 1.0;
        const double v = gaussian_integral(P, [](const Eigen::VectorXd&) { return 1.0; }, 1.0, 400.0);
        check("Gaussian integral sqrt(pi/2)", std::abs(v - std::sqrt(kPi / 2.0)) < 1e-6, v);
    });
    guarded("quadruple", [&] {
        const ConeQuadruple q = cone_quadruple(1.3, Vec2(0.5, 0.5), 0.0, 0.95);
        check("cone quadruple algebra", q.null_defect() < 1e-12 && q.balance_defect() < 1e-12,
              std::max(q.null_defect(), q.balance_defect()));
    });
    guarded("disk chord", [&] {
        const Metric disk = Metric::euclidean(Domain::disk(Vec2::Zero(), 1.0));
        const Geodesic g = trace_geodesic(disk, Vec2(-1, 0), Vec2(1, 0));
        check("disk diameter exit time is 2", std::abs(g.tau_plus - 2.0) < 1e-6, g.tau_plus);
    });
    guarded("transform of ones", [&] {
        const RayFamily fam = make_ray_family_1d(flat1, {0.3}, {0.7});
        const auto v = light_ray_transform([](double, const Vec2&) { return 1.0; }, fam);
        const double err = std::max(std::abs(v[0] - 1.0), std::abs(v[1] - 1.0));
        check("light-ray transform of 1 is the segment length", err < 1e-10, err);
    });
    guarded("short horizon", [&] {
        const Grid g(1, 0.0, 0.0, 0.05, 21, 1, 0.0, 0.05, 20);
        const InfluenceMasks im = influence_sets(flat1, g, 1.0);
        std::size_t n = 0;
        for (auto e : im.E) n += e;
        check("influence set is empty for T = 1", n == 0, static_cast<double>(n));
    });
    guarded("quadruple weights", [&] {
        const ConeQuadruple q = cone_quadruple(2.0, Vec2(0.5, 0.5), 0.0, 0.6);
        const double err = std::max({std::abs(q.k[0] + 0.2), std::abs(q.k[1] + 1.8), std::abs(q.k[2] - 1.0),
                                     std::abs(q.k[3] - 1.0)});
        check("quadruple weights (-0.2, -1.8, 1, 1)", err < 1e-12, err);
    });
    guarded("critical point", [&] {
        bool rejected = false;
        try {
            build_weight(Domain::interval(0, 1), Vec2(0.5, 0), 0.7, 0.0, 0.5, 2.0, 51);
        } catch (const CriticalPointError&) {
            rejected = true;
        }
        check("weight centre inside the domain is rejected", rejected, rejected ? 1.0 : 0.0);
    });
    guarded("weight", [&] {
        const CarlemanWeight w = build_weight(Domain::interval(0, 1), Vec2(-0.5, 0), 0.7, 0.0, 0.5, 2.0, 201);
        check("Carleman weight properties", w.property1() && w.property2(), std::min(w.margin1, w.margin2));
    });
    guarded("config", [&] {
        bool ok = true;
        for (const auto& k : kinds()) ok = ok && !resolve_config(example_config(k)).empty();
        check("example configs validate", ok, ok ? 1.0 : 0.0);
    });
    out << (failed ? "selftest failed: " + std::to_string(failed) + " check(s)\n" : "selftest passed\n");
    return failed ? kNumericFailure : kOk;
}

}  // namespace beamtomo::cli
