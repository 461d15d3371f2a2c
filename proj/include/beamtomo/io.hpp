#pragma once

#include <string>
#include <vector>

#include "beamtomo/grid.hpp"

namespace beamtomo {

// CSV with a header line; values printed with round-trip precision.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
void write_text(const std::string& path, const std::string& text);

struct FieldMeta {
    std::vector<std::size_t> dims;  // slowest first
    double h = 0.0, dt = 0.0, T = 0.0;
    std::string kind;
};

// Little-endian float64, row-major, plus `<path>.json` holding the metadata.
void write_field(const std::string& path, const std::vector<double>& values, const FieldMeta& meta);
std::vector<double> read_field(const std::string& path, FieldMeta* meta = nullptr);

// Space-time field on a grid: dims (levels, ny, nx), or (levels, nx) in 1D.
FieldMeta grid_meta(const Grid& grid, const std::string& kind);

// Long-form table rows (t, x[, y], value) of a space-time field on a grid.
void write_field_csv(const std::string& path, const Grid& grid, const std::vector<double>& values,
                     const std::string& value_name);

}  // namespace beamtomo
