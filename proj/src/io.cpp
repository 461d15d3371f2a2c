#include "beamtomo/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace beamtomo {

namespace {

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(path, mode | std::ios::trunc);
    if (!f) throw PreconditionError("io", "cannot open " + path + " for writing");
    return f;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    auto f = open_out(path);
    for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
    f << '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size()) throw PreconditionError("io", "row width differs from header in " + path);
        for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << fmt(row[i]);
        f << '\n';
    }
}

void write_text(const std::string& path, const std::string& text) {
    auto f = open_out(path);
    f << text;
}

void write_field(const std::string& path, const std::vector<double>& values, const FieldMeta& meta) {
    std::size_t n = 1;
    for (auto d : meta.dims) n *= d;
    if (n != values.size()) throw PreconditionError("io", "field size does not match dims for " + path);
    auto f = open_out(path, std::ios::out | std::ios::binary);
    if constexpr (std::endian::native == std::endian::little) {
        f.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
    } else {
        for (double v : values) {
            unsigned char b[8];
            std::memcpy(b, &v, 8);
            for (int i = 7; i >= 0; --i) f.put(static_cast<char>(b[i]));
        }
    }
    nlohmann::ordered_json j;
    j["dims"] = meta.dims;
    j["h"] = meta.h;
    j["dt"] = meta.dt;
    j["T"] = meta.T;
    j["kind"] = meta.kind;
    write_text(path + ".json", j.dump(2) + "\n");
}

std::vector<double> read_field(const std::string& path, FieldMeta* meta) {
    std::ifstream jf(path + ".json");
    if (!jf) throw PreconditionError("io", "missing sidecar " + path + ".json");
    const auto j = nlohmann::json::parse(jf);
    FieldMeta m;
    m.dims = j.at("dims").get<std::vector<std::size_t>>();
    m.h = j.at("h").get<double>();
    m.dt = j.at("dt").get<double>();
    m.T = j.at("T").get<double>();
    m.kind = j.at("kind").get<std::string>();
    std::size_t n = 1;
    for (auto d : m.dims) n *= d;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw PreconditionError("io", "cannot open " + path);
    std::vector<double> v(n);
    f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8));
    if (static_cast<std::size_t>(f.gcount()) != n * 8) throw PreconditionError("io", "truncated field " + path);
    if constexpr (std::endian::native != std::endian::little) {
        for (double& x : v) {
            unsigned char b[8];
            std::memcpy(b, &x, 8);
            for (int i = 0; i < 4; ++i) std::swap(b[i], b[7 - i]);
            std::memcpy(&x, b, 8);
        }
    }
    if (meta) *meta = m;
    return v;
}

FieldMeta grid_meta(const Grid& grid, const std::string& kind) {
    FieldMeta m;
    m.dims = {grid.levels()};
    if (grid.dim() == 2) m.dims.push_back(static_cast<std::size_t>(grid.ny()));
    m.dims.push_back(static_cast<std::size_t>(grid.nx()));
    m.h = grid.h();
    m.dt = grid.dt();
    m.T = grid.T();
    m.kind = kind;
    return m;
}

void write_field_csv(const std::string& path, const Grid& grid, const std::vector<double>& values,
                     const std::string& value_name) {
    if (values.size() != grid.levels() * grid.nodes()) throw PreconditionError("io", "field does not match grid");
    std::vector<std::string> header{"t", "x"};
    if (grid.dim() == 2) header.push_back("y");
    header.push_back(value_name);
    std::vector<std::vector<double>> rows;
    rows.reserve(values.size());
    for (std::size_t k = 0; k < grid.levels(); ++k)
        for (std::size_t n = 0; n < grid.nodes(); ++n) {
            const Vec2 p = grid.point(n);
            std::vector<double> row{grid.t(static_cast<int>(k)), p.x()};
            if (grid.dim() == 2) row.push_back(p.y());
            row.push_back(values[k * grid.nodes() + n]);
            rows.push_back(std::move(row));
        }
    write_csv(path, header, rows);
}

}  // namespace beamtomo
