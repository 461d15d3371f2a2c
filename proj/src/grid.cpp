#include "beamtomo/grid.hpp"

#include <cmath>

#include "beamtomo/geometry.hpp"

namespace beamtomo {

Grid::Grid(int dim, double x0, double y0, double h, int nx, int ny, double t0, double dt, int nt)
    : dim_(dim), nx_(nx), ny_(dim == 2 ? ny : 1), nt_(nt), x0_(x0), y0_(dim == 2 ? y0 : 0.0), h_(h), t0_(t0), dt_(dt) {
    if (dim != 1 && dim != 2) throw ConfigError("grid", "dim must be 1 or 2");
    if (nx_ < 4 || (dim == 2 && ny_ < 4)) throw ConfigError("grid", "need at least 4 nodes per axis");
    if (!(h > 0) || !(dt > 0) || nt < 1) throw ConfigError("grid", "steps must be positive");
    build_boundary();
}

Grid Grid::for_domain(const Domain& domain, double h, double T, double cfl, double speed_max, double t0) {
    if (domain.kind() == DomainKind::disk)
        throw ConfigError("grid", "solver grids support intervals and rectangles only");
    if (!(h > 0) || !(T > 0) || !(cfl > 0)) throw ConfigError("grid", "h, T and cfl must be positive");
    const double lx = domain.hi().x() - domain.lo().x();
    const int nx = static_cast<int>(std::lround(lx / h)) + 1;
    const double hh = lx / (nx - 1);
    int ny = 1;
    if (domain.dim() == 2) {
        const double ly = domain.hi().y() - domain.lo().y();
        ny = static_cast<int>(std::lround(ly / hh)) + 1;
        if (std::abs((ny - 1) * hh - ly) > 1e-9 * ly)
            throw ConfigError("grid", "rectangle sides must be commensurate with h");
    }
    const double dt_max = cfl * hh / speed_max;
    const int nt = static_cast<int>(std::ceil((T - t0) / dt_max - 1e-9));
    return Grid(domain.dim(), domain.lo().x(), domain.lo().y(), hh, nx, ny, t0, (T - t0) / nt, nt);
}

void Grid::build_boundary() {
    slot_.assign(nodes(), -1);
    auto add_node = [&](std::size_t n) {
        if (slot_[n] < 0) {
            slot_[n] = static_cast<long>(boundary_nodes_.size());
            boundary_nodes_.push_back(n);
        }
    };
    if (dim_ == 1) {
        add_node(0);
        add_node(nx_ - 1);
        boundary_samples_.push_back({index(0), index(1), index(2), Vec2(-1, 0), 1.0});
        boundary_samples_.push_back({index(nx_ - 1), index(nx_ - 2), index(nx_ - 3), Vec2(1, 0), 1.0});
        return;
    }
    for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i)
            if (i == 0 || j == 0 || i == nx_ - 1 || j == ny_ - 1) add_node(index(i, j));
    auto w = [&](int i, int n) { return (i == 0 || i == n - 1) ? 0.5 * h_ : h_; };
    for (int i = 0; i < nx_; ++i) {
        boundary_samples_.push_back({index(i, 0), index(i, 1), index(i, 2), Vec2(0, -1), w(i, nx_)});
        boundary_samples_.push_back(
            {index(i, ny_ - 1), index(i, ny_ - 2), index(i, ny_ - 3), Vec2(0, 1), w(i, nx_)});
    }
    for (int j = 0; j < ny_; ++j) {
        boundary_samples_.push_back({index(0, j), index(1, j), index(2, j), Vec2(-1, 0), w(j, ny_)});
        boundary_samples_.push_back(
            {index(nx_ - 1, j), index(nx_ - 2, j), index(nx_ - 3, j), Vec2(1, 0), w(j, ny_)});
    }
}

bool Grid::on_boundary(std::size_t node) const { return slot_[node] >= 0; }

double Grid::cell_weight(std::size_t node) const {
    const int i = ix(node);
    double w = (i == 0 || i == nx_ - 1) ? 0.5 * h_ : h_;
    if (dim_ == 2) {
        const int j = iy(node);
        w *= (j == 0 || j == ny_ - 1) ? 0.5 * h_ : h_;
    }
    return w;
}

}  // namespace beamtomo
