/*
    MIT License

    Copyright (c) 2026 The kdt authors

    Permission is hereby granted, free of charge, to any person obtaining a copy
    of this software and associated documentation files (the "Software"), to deal
    in the Software without restriction, including without limitation the rights
    to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
    copies of the Software, and to permit persons to whom the Software is
    furnished to do so, subject to the following conditions:

    The above copyright notice and this permission notice shall be included in all
    copies or substantial portions of the Software.

    THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
    IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
    FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
    AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
    LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
    OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
    SOFTWARE.
*/

#pragma once

#include "kdt/poly_edge.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kdt
{

    class MapFormatError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Uniform 3D occupancy grid. Cell (i, j, k) covers
    /// [origin + (i, j, k) * resolution, origin + (i + 1, j + 1, k + 1) * resolution).
    /// Storage is x-fastest. 2D maps use nz = 1.
    class OccupancyGrid
    {
    public:
        OccupancyGrid() = default;

        OccupancyGrid(const Eigen::Vector3i& dims, double resolution, const Eigen::Vector3d& origin)
            : dims_(dims), resolution_(resolution), origin_(origin)
        {
            if (!(resolution > 0.0) || dims.minCoeff() < 1)
            {
                throw std::invalid_argument("occupancy grid needs positive resolution and dimensions");
            }
            cells_.assign(static_cast<std::size_t>(dims.x()) * dims.y() * dims.z(), 0);
        }

        const Eigen::Vector3i& dims() const { return dims_; }
        double resolution() const { return resolution_; }
        const Eigen::Vector3d& origin() const { return origin_; }
        Eigen::Vector3d extent() const { return dims_.cast<double>() * resolution_; }
        Eigen::Vector3d upper() const { return origin_ + extent(); }
        std::size_t size() const { return cells_.size(); }
        bool empty() const { return cells_.empty(); }

        std::size_t index(int i, int j, int k) const
        {
            return static_cast<std::size_t>(i) +
                   static_cast<std::size_t>(dims_.x()) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_.y()) * k);
        }

        bool contains(int i, int j, int k) const
        {
            return i >= 0 && j >= 0 && k >= 0 && i < dims_.x() && j < dims_.y() && k < dims_.z();
        }

        bool occupied(int i, int j, int k) const { return cells_[index(i, j, k)] != 0; }
        void set(int i, int j, int k, bool occ) { cells_[index(i, j, k)] = occ ? 1 : 0; }

        bool in_bounds(const Eigen::Vector3d& p) const
        {
            return (p.array() >= origin_.array()).all() && (p.array() < upper().array()).all();
        }

        Eigen::Vector3i cell_of(const Eigen::Vector3d& p) const
        {
            return ((p - origin_) / resolution_).array().floor().cast<int>();
        }

        Eigen::Vector3d center(int i, int j, int k) const
        {
            return origin_ + (Eigen::Vector3d(i, j, k).array() + 0.5).matrix() * resolution_;
        }

        /// Out-of-bounds positions count as occupied.
        bool occupied_at(const Eigen::Vector3d& p) const
        {
            if (!in_bounds(p))
            {
                return true;
            }
            const Eigen::Vector3i c = cell_of(p);
            if (!contains(c.x(), c.y(), c.z()))
            {
                return true;
            }
            return occupied(c.x(), c.y(), c.z());
        }

        std::span<const std::uint8_t> cells() const { return cells_; }
        std::span<std::uint8_t> cells() { return cells_; }

        std::size_t count_occupied() const
        {
            return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
        }

        bool operator==(const OccupancyGrid& o) const
        {
            return dims_ == o.dims_ && resolution_ == o.resolution_ && origin_ == o.origin_ && cells_ == o.cells_;
        }

    private:
        Eigen::Vector3i dims_ = Eigen::Vector3i::Zero();
        double resolution_ = 1.0;
        Eigen::Vector3d origin_ = Eigen::Vector3d::Zero();
        std::vector<std::uint8_t> cells_;
    };

    namespace detail
    {
        inline constexpr double kUnreached = std::numeric_limits<double>::infinity();

        // Exact 1D squared distance transform (lower envelope of parabolas).
        // Sites with f = inf are skipped; a row without sites stays at inf.
        inline void edt_1d(std::span<const double> f, std::span<double> out,
                           std::vector<int>& v, std::vector<double>& z)
        {
            const int n = static_cast<int>(f.size());
            v.resize(n);
            z.resize(n + 1);
            int k = -1;
            for (int q = 0; q < n; ++q)
            {
                if (!std::isfinite(f[q]))
                {
                    continue;
                }
                while (k >= 0)
                {
                    const int p = v[k];
                    const double s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
                    if (s <= z[k])
                    {
                        --k;
                    }
                    else
                    {
                        break;
                    }
                }
                ++k;
                v[k] = q;
                z[k] = k == 0 ? -kUnreached
                              : ((f[q] + double(q) * q) - (f[v[k - 1]] + double(v[k - 1]) * v[k - 1])) /
                                    (2.0 * q - 2.0 * v[k - 1]);
                z[k + 1] = kUnreached;
            }
            if (k < 0)
            {
                std::fill(out.begin(), out.end(), kUnreached);
                return;
            }
            int j = 0;
            for (int q = 0; q < n; ++q)
            {
                while (z[j + 1] < q)
                {
                    ++j;
                }
                const double dq = q - v[j];
                out[q] = dq * dq + f[v[j]];
            }
        }

        // Squared distance in cell units from every cell to the nearest occupied cell.
        inline std::vector<double> squared_edt(const OccupancyGrid& grid)
        {
            const Eigen::Vector3i n = grid.dims();
            std::vector<double> d(grid.size());
            for (std::size_t i = 0; i < d.size(); ++i)
            {
                d[i] = grid.cells()[i] ? 0.0 : kUnreached;
            }
            std::vector<double> line_in, line_out;
            std::vector<int> v;
            std::vector<double> z;
            for (int axis = 0; axis < 3; ++axis)
            {
                const int len = n[axis];
                line_in.resize(len);
                line_out.resize(len);
                const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
                for (int u = 0; u < n[a1]; ++u)
                {
                    for (int w = 0; w < n[a2]; ++w)
                    {
                        Eigen::Vector3i c;
                        c[a1] = u;
                        c[a2] = w;
                        for (int q = 0; q < len; ++q)
                        {
                            c[axis] = q;
                            line_in[q] = d[grid.index(c.x(), c.y(), c.z())];
                        }
                        edt_1d(line_in, line_out, v, z);
                        for (int q = 0; q < len; ++q)
                        {
                            c[axis] = q;
                            d[grid.index(c.x(), c.y(), c.z())] = line_out[q];
                        }
                    }
                }
            }
            return d;
        }
    } // namespace detail

    /// Marks every cell whose center lies within `radius` of an occupied cell center.
    inline OccupancyGrid inflate(const OccupancyGrid& grid, double radius)
    {
        if (radius < 0.0)
        {
            throw std::invalid_argument("inflation radius must be non-negative");
        }
        if (radius == 0.0 || grid.count_occupied() == 0)
        {
            return grid;
        }
        const double r_cells = radius / grid.resolution();
        const double limit = r_cells * r_cells + 1e-9;
        const std::vector<double> d2 = detail::squared_edt(grid);
        OccupancyGrid out = grid;
        auto cells = out.cells();
        for (std::size_t i = 0; i < d2.size(); ++i)
        {
            cells[i] = d2[i] <= limit ? 1 : 0;
        }
        return out;
    }

    struct FieldSample
    {
        double value = 0.0;
        Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
        // Query point was outside the grid and got clamped to the boundary.
        bool clamped = false;
    };

    /// Cell-centered Euclidean distance field with trilinear interpolation.
    class DistanceField
    {
    public:
        DistanceField() = default;

        DistanceField(const OccupancyGrid& geometry, std::vector<double> values)
            : dims_(geometry.dims()), resolution_(geometry.resolution()),
              origin_(geometry.origin()), values_(std::move(values))
        {
        }

        const Eigen::Vector3i& dims() const { return dims_; }
        double resolution() const { return resolution_; }
        const Eigen::Vector3d& origin() const { return origin_; }
        std::span<const double> values() const { return values_; }

        double at(int i, int j, int k) const
        {
            return values_[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims_.x()) *
                                                             (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_.y()) * k)];
        }

        /// Trilinear interpolation over cell centers and the exact gradient of the
        /// interpolant. Near the outer faces (half a cell) the lattice coordinate is
        /// clamped, so the value is constant across that band.
        FieldSample query(const Eigen::Vector3d& p) const
        {
            FieldSample out;
            const Eigen::Vector3d upper = origin_ + dims_.cast<double>() * resolution_;
            out.clamped = !((p.array() >= origin_.array()).all() && (p.array() <= upper.array()).all());

            int i0[3];
            double fr[3];
            bool flat[3];
            for (int a = 0; a < 3; ++a)
            {
                const double u = (p[a] - origin_[a]) / resolution_ - 0.5;
                const int n = dims_[a];
                if (n == 1 || u <= 0.0 || u >= n - 1)
                {
                    flat[a] = true;
                    i0[a] = n == 1 || u <= 0.0 ? 0 : n - 2;
                    fr[a] = n == 1 || u <= 0.0 ? 0.0 : 1.0;
                }
                else
                {
                    flat[a] = false;
                    i0[a] = std::min(static_cast<int>(std::floor(u)), n - 2);
                    fr[a] = u - i0[a];
                }
            }

            const int i1x = dims_.x() > 1 ? i0[0] + 1 : i0[0];
            const int i1y = dims_.y() > 1 ? i0[1] + 1 : i0[1];
            const int i1z = dims_.z() > 1 ? i0[2] + 1 : i0[2];
            const double c000 = at(i0[0], i0[1], i0[2]);
            const double c100 = at(i1x, i0[1], i0[2]);
            const double c010 = at(i0[0], i1y, i0[2]);
            const double c110 = at(i1x, i1y, i0[2]);
            const double c001 = at(i0[0], i0[1], i1z);
            const double c101 = at(i1x, i0[1], i1z);
            const double c011 = at(i0[0], i1y, i1z);
            const double c111 = at(i1x, i1y, i1z);

            const double x = fr[0], y = fr[1], z = fr[2];
            const double c00 = c000 + x * (c100 - c000);
            const double c10 = c010 + x * (c110 - c010);
            const double c01 = c001 + x * (c101 - c001);
            const double c11 = c011 + x * (c111 - c011);
            const double c0 = c00 + y * (c10 - c00);
            const double c1 = c01 + y * (c11 - c01);
            out.value = c0 + z * (c1 - c0);

            const double dx = (1 - y) * (1 - z) * (c100 - c000) + y * (1 - z) * (c110 - c010) +
                              (1 - y) * z * (c101 - c001) + y * z * (c111 - c011);
            const double dy = (1 - z) * (c10 - c00) + z * (c11 - c01);
            const double dz = c1 - c0;
            out.gradient = Eigen::Vector3d(flat[0] ? 0.0 : dx, flat[1] ? 0.0 : dy, flat[2] ? 0.0 : dz) / resolution_;
            return out;
        }

    private:
        Eigen::Vector3i dims_ = Eigen::Vector3i::Zero();
        double resolution_ = 1.0;
        Eigen::Vector3d origin_ = Eigen::Vector3d::Zero();
        std::vector<double> values_;
    };

    /// Exact Euclidean distance (meters) from every cell center to the nearest
    /// occupied cell center. Unreachable cells (empty grid) are capped at the
    /// domain diagonal.
    inline DistanceField build_distance_field(const OccupancyGrid& grid)
    {
        if (grid.empty())
        {
            throw std::invalid_argument("distance field of an empty grid");
        }
        const double diagonal = grid.resolution() * grid.dims().cast<double>().norm();
        std::vector<double> d2 = detail::squared_edt(grid);
        for (double& v : d2)
        {
            v = std::isfinite(v) ? std::min(std::sqrt(v) * grid.resolution(), diagonal) : diagonal;
        }
        return DistanceField(grid, std::move(d2));
    }

    /// Everything the planner needs to know about the world: the raw map, its
    /// inflated copy used for hard collision checks, and the distance field of
    /// the raw map used by soft clearance penalties.
    struct Environment
    {
        OccupancyGrid raw;
        OccupancyGrid inflated;
        DistanceField field;
        double inflation = 0.0;

        static Environment build(OccupancyGrid map, double inflation_radius)
        {
            Environment env;
            env.inflated = inflate(map, inflation_radius);
            env.field = build_distance_field(map);
            env.raw = std::move(map);
            env.inflation = inflation_radius;
            return env;
        }
    };

    enum class Infeasibility
    {
        none,
        collision,
        clearance,
        dynamics,
    };

    struct EdgeVerdict
    {
        bool feasible = true;
        Infeasibility reason = Infeasibility::none;
        double time = 0.0; // first offending sample
        int order = 0;     // offending derivative order when reason == dynamics

        explicit operator bool() const { return feasible; }
    };

    inline constexpr double kDefaultCheckStep = 0.02;

    /// Samples t = 0, dt, 2dt, ... and t = T. Fails on a position inside an
    /// inflated (or out-of-bounds) cell, on a distance-field value below
    /// `clearance` when clearance > 0, or on |p^(k)(t)| > limits[k-1] for k = 1..S.
    template <int S>
    EdgeVerdict check_edge(const PolyEdge<S>& edge, const Environment& env,
                           const Eigen::Matrix<double, S, 1>& limits,
                           double clearance = 0.0, double dt = kDefaultCheckStep)
    {
        if (!(dt > 0.0))
        {
            throw std::invalid_argument("check_edge needs dt > 0");
        }
        const Eigen::Matrix<double, S, 1> lim2 = limits.cwiseProduct(limits);
        const int steps = static_cast<int>(std::ceil(edge.duration / dt - 1e-9));
        for (int s = 0; s <= steps; ++s)
        {
            const double t = std::min(s * dt, edge.duration);
            // Powers of t shared by all derivative orders.
            std::array<double, 2 * S> pw;
            pw[0] = 1.0;
            for (int j = 1; j < 2 * S; ++j)
            {
                pw[j] = pw[j - 1] * t;
            }
            for (int k = 1; k <= S; ++k)
            {
                Eigen::Vector3d v = Eigen::Vector3d::Zero();
                for (int j = k; j < 2 * S; ++j)
                {
                    v += (detail::falling(j, k) * pw[j - k]) * edge.coeffs.row(j).transpose();
                }
                if (v.squaredNorm() > lim2[k - 1])
                {
                    return {false, Infeasibility::dynamics, t, k};
                }
            }
            Eigen::Vector3d p = Eigen::Vector3d::Zero();
            for (int j = 0; j < 2 * S; ++j)
            {
                p += pw[j] * edge.coeffs.row(j).transpose();
            }
            if (env.inflated.occupied_at(p))
            {
                return {false, Infeasibility::collision, t, 0};
            }
            if (clearance > 0.0 && env.field.query(p).value < clearance)
            {
                return {false, Infeasibility::clearance, t, 0};
            }
        }
        return {};
    }

    // ---------------------------------------------------------------------
    // Map files: "KDTMAP1 nx ny nz resolution ox oy oz\n" followed by
    // nx*ny*nz bytes (x fastest), 0 = free, 1 = occupied.

    namespace detail
    {
        inline std::string shortest(double v)
        {
            char buf[64];
            const auto res = std::to_chars(buf, buf + sizeof(buf), v);
            return std::string(buf, res.ptr);
        }
    } // namespace detail

    inline void write_map(std::ostream& os, const OccupancyGrid& grid)
    {
        const auto& n = grid.dims();
        const auto& o = grid.origin();
        os << "KDTMAP1 " << n.x() << ' ' << n.y() << ' ' << n.z() << ' ' << detail::shortest(grid.resolution()) << ' '
           << detail::shortest(o.x()) << ' ' << detail::shortest(o.y()) << ' ' << detail::shortest(o.z()) << '\n';
        const auto cells = grid.cells();
        os.write(reinterpret_cast<const char*>(cells.data()), static_cast<std::streamsize>(cells.size()));
    }

    inline OccupancyGrid read_map(std::istream& is)
    {
        std::string header;
        if (!std::getline(is, header))
        {
            throw MapFormatError("missing map header");
        }
        std::istringstream hs(header);
        std::string magic;
        Eigen::Vector3i n;
        double res = 0.0;
        Eigen::Vector3d o;
        if (!(hs >> magic >> n.x() >> n.y() >> n.z() >> res >> o.x() >> o.y() >> o.z()) || magic != "KDTMAP1")
        {
            throw MapFormatError("malformed map header: " + header);
        }
        std::string rest;
        if (hs >> rest)
        {
            throw MapFormatError("trailing tokens in map header");
        }
        if (n.minCoeff() < 1 || !(res > 0.0))
        {
            throw MapFormatError("map dimensions and resolution must be positive");
        }
        OccupancyGrid grid(n, res, o);
        auto cells = grid.cells();
        is.read(reinterpret_cast<char*>(cells.data()), static_cast<std::streamsize>(cells.size()));
        if (static_cast<std::size_t>(is.gcount()) != cells.size())
        {
            throw MapFormatError("map payload truncated");
        }
        for (auto c : cells)
        {
            if (c > 1)
            {
                throw MapFormatError("map cells must be 0 or 1");
            }
        }
        if (is.peek() != std::char_traits<char>::eof())
        {
            throw MapFormatError("trailing bytes after map payload");
        }
        return grid;
    }

    inline void save_map(const std::string& path, const OccupancyGrid& grid)
    {
        std::ofstream os(path, std::ios::binary);
        if (!os)
        {
            throw std::runtime_error("cannot open " + path + " for writing");
        }
        write_map(os, grid);
    }

    inline OccupancyGrid load_map(const std::string& path)
    {
        std::ifstream is(path, std::ios::binary);
        if (!is)
        {
            throw std::runtime_error("cannot open map " + path);
        }
        return read_map(is);
    }

} // namespace kdt
