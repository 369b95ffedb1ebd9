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

#include "kdt/env_field.hpp"
#include "kdt/planner.hpp"
#include "kdt/traj_tree.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace kdt::bench
{

    class ConfigError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    class GenerationError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    // ---------------------------------------------------------------------
    // Config files: first meaningful line "kdtcfg=1", then "key = value" lines.
    // '#' starts a comment. Unknown keys are errors.

    namespace detail
    {
        inline const std::set<std::string>& known_keys()
        {
            static const std::set<std::string> keys = {
                "map", "map.kind", "map.size", "map.resolution", "map.obstacles", "map.radius_min",
                "map.radius_max", "map.seed", "map.keep_free", "map.walls", "map.gap",
                "start", "goal", "order", "rho", "limits", "inflation", "check_dt", "check_clearance",
                "near_radius", "near_factor", "exact_near", "goal_bias", "goal_region", "sample_speed",
                "seed", "budget_s", "node_budget", "iteration_budget", "scheme", "variant", "deform",
                "penalty.weights", "penalty.clearance", "penalty.spacing",
                "nsopt.iterations", "nsopt.evaluations", "nsopt.tolerance", "nsopt.memory",
                "trials", "threads", "methods", "bin_s",
            };
            return keys;
        }

        inline std::string trim(const std::string& s)
        {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos)
            {
                return {};
            }
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        }

        inline double to_double(const std::string& key, const std::string& v)
        {
            double out = 0.0;
            const auto s = trim(v);
            const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(out))
            {
                throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
            }
            return out;
        }

        inline long long to_int(const std::string& key, const std::string& v)
        {
            long long out = 0;
            const auto s = trim(v);
            const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            {
                throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
            }
            return out;
        }

        inline std::vector<double> to_doubles(const std::string& key, const std::string& v)
        {
            std::vector<double> out;
            std::istringstream is(v);
            std::string tok;
            while (is >> tok)
            {
                out.push_back(to_double(key, tok));
            }
            return out;
        }

        inline Eigen::Vector3d to_vec3(const std::string& key, const std::string& v)
        {
            const auto xs = to_doubles(key, v);
            if (xs.size() != 3)
            {
                throw ConfigError("key '" + key + "': expected three numbers");
            }
            return {xs[0], xs[1], xs[2]};
        }

        inline bool to_bool(const std::string& key, const std::string& v)
        {
            const auto s = trim(v);
            if (s == "1" || s == "true" || s == "yes")
            {
                return true;
            }
            if (s == "0" || s == "false" || s == "no")
            {
                return false;
            }
            throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
        }
    } // namespace detail

    inline GrowthScheme parse_scheme(const std::string& s)
    {
        if (s == "krrt")
        {
            return GrowthScheme::krrt;
        }
        if (s == "krrtstar")
        {
            return GrowthScheme::krrt_star;
        }
        if (s == "krrtsharp")
        {
            return GrowthScheme::krrt_sharp;
        }
        throw ConfigError("unknown scheme '" + s + "' (krrt, krrtstar, krrtsharp)");
    }

    inline std::string to_string(GrowthScheme s)
    {
        switch (s)
        {
        case GrowthScheme::krrt:
            return "krrt";
        case GrowthScheme::krrt_star:
            return "krrtstar";
        case GrowthScheme::krrt_sharp:
            return "krrtsharp";
        }
        return "?";
    }

    inline DeformVariant parse_variant(const std::string& s)
    {
        static const std::map<std::string, DeformVariant> names = {
            {"off", DeformVariant::off}, {"node", DeformVariant::node}, {"trunk", DeformVariant::trunk},
            {"branch", DeformVariant::branch}, {"tree", DeformVariant::tree}};
        const auto it = names.find(s);
        if (it == names.end())
        {
            throw ConfigError("unknown variant '" + s + "' (off, node, trunk, branch, tree)");
        }
        return it->second;
    }

    inline std::string to_string(DeformVariant v)
    {
        switch (v)
        {
        case DeformVariant::off:
            return "off";
        case DeformVariant::node:
            return "node";
        case DeformVariant::trunk:
            return "trunk";
        case DeformVariant::branch:
            return "branch";
        case DeformVariant::tree:
            return "tree";
        }
        return "?";
    }

    /// One column of the method matrix.
    struct Method
    {
        GrowthScheme scheme = GrowthScheme::krrt_sharp;
        DeformVariant variant = DeformVariant::off;
        DeformMode mode = DeformMode::spatio_temporal;

        /// "krrtsharp", "krrtsharp-branch-st", "krrt-node-s", ...
        std::string label() const
        {
            if (variant == DeformVariant::off)
            {
                return to_string(scheme);
            }
            return to_string(scheme) + "-" + to_string(variant) + (mode == DeformMode::spatial ? "-s" : "-st");
        }

        static Method parse(const std::string& label)
        {
            std::vector<std::string> parts;
            std::stringstream ss(label);
            std::string p;
            while (std::getline(ss, p, '-'))
            {
                parts.push_back(p);
            }
            Method m;
            if (parts.empty())
            {
                throw ConfigError("empty method label");
            }
            m.scheme = parse_scheme(parts[0]);
            if (parts.size() == 1)
            {
                return m;
            }
            if (parts.size() != 3 || (parts[2] != "s" && parts[2] != "st"))
            {
                throw ConfigError("method '" + label + "' must look like scheme[-variant-(s|st)]");
            }
            m.variant = parse_variant(parts[1]);
            m.mode = parts[2] == "s" ? DeformMode::spatial : DeformMode::spatio_temporal;
            if (m.variant == DeformVariant::off)
            {
                throw ConfigError("method '" + label + "': variant off takes no mode");
            }
            return m;
        }
    };

    /// Validated key/value settings. Values stay textual until applied.
    class Settings
    {
    public:
        static Settings parse(std::istream& is)
        {
            Settings s;
            std::string line;
            bool header = false;
            int lineno = 0;
            while (std::getline(is, line))
            {
                ++lineno;
                const auto hash = line.find('#');
                if (hash != std::string::npos)
                {
                    line.resize(hash);
                }
                line = detail::trim(line);
                if (line.empty())
                {
                    continue;
                }
                if (!header)
                {
                    std::string compact;
                    std::remove_copy_if(line.begin(), line.end(), std::back_inserter(compact), [](char c) { return c == ' ' || c == '\t'; });
                    if (compact != "kdtcfg=1")
                    {
                        throw ConfigError("config must start with 'kdtcfg=1'");
                    }
                    header = true;
                    continue;
                }
                const auto eq = line.find('=');
                if (eq == std::string::npos)
                {
                    throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
                }
                s.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
            }
            if (!header)
            {
                throw ConfigError("config must start with 'kdtcfg=1'");
            }
            return s;
        }

        static Settings parse_string(const std::string& text)
        {
            std::istringstream is(text);
            return parse(is);
        }

        void set(const std::string& key, const std::string& value)
        {
            if (!detail::known_keys().count(key))
            {
                throw ConfigError("unknown config key '" + key + "'");
            }
            values_[key] = value;
            check(key);
        }

        bool has(const std::string& key) const { return values_.count(key) > 0; }
        const std::map<std::string, std::string>& values() const { return values_; }

        std::string text(const std::string& key, const std::string& fallback) const
        {
            const auto it = values_.find(key);
            return it == values_.end() ? fallback : it->second;
        }

        double number(const std::string& key, double fallback) const
        {
            return has(key) ? detail::to_double(key, values_.at(key)) : fallback;
        }

        long long integer(const std::string& key, long long fallback) const
        {
            return has(key) ? detail::to_int(key, values_.at(key)) : fallback;
        }

        int order() const { return static_cast<int>(integer("order", 3)); }

        void write(std::ostream& os) const
        {
            os << "kdtcfg=1\n";
            for (const auto& [k, v] : values_)
            {
                os << k << " = " << v << '\n';
            }
        }

    private:
        // Type-checks a value as soon as it is set so errors point at the key.
        void check(const std::string& key) const
        {
            const std::string& v = values_.at(key);
            static const std::set<std::string> reals = {
                "map.resolution", "map.radius_min", "map.radius_max", "map.keep_free", "map.gap", "rho", "inflation",
                "check_dt", "check_clearance", "near_radius", "near_factor", "goal_bias", "goal_region",
                "sample_speed", "budget_s", "penalty.clearance", "penalty.spacing", "nsopt.tolerance", "bin_s"};
            static const std::set<std::string> ints = {
                "map.obstacles", "map.seed", "map.walls", "order", "seed", "node_budget", "iteration_budget",
                "nsopt.iterations", "nsopt.evaluations", "nsopt.memory", "trials", "threads"};
            if (reals.count(key))
            {
                detail::to_double(key, v);
            }
            else if (ints.count(key))
            {
                if (detail::to_int(key, v) < 0)
                {
                    throw ConfigError("key '" + key + "' must be non-negative");
                }
            }
            else if (key == "map.size" || key == "start" || key == "goal")
            {
                detail::to_vec3(key, v);
            }
            else if (key == "limits" || key == "penalty.weights")
            {
                detail::to_doubles(key, v);
            }
            else if (key == "exact_near")
            {
                detail::to_bool(key, v);
            }
            else if (key == "scheme")
            {
                parse_scheme(v);
            }
            else if (key == "variant")
            {
                parse_variant(v);
            }
            else if (key == "deform" && v != "off" && v != "s" && v != "st")
            {
                throw ConfigError("deform must be off, s or st");
            }
            else if (key == "methods")
            {
                std::stringstream ss(v);
                std::string m;
                while (std::getline(ss, m, ','))
                {
                    Method::parse(detail::trim(m));
                }
            }
            else if (key == "map.kind" && v != "forest" && v != "cave")
            {
                throw ConfigError("map.kind must be forest or cave");
            }
            if (key == "order")
            {
                const auto s = detail::to_int(key, v);
                if (s < 2 || s > 4)
                {
                    throw ConfigError("order must be 2, 3 or 4");
                }
            }
        }

        std::map<std::string, std::string> values_;
    };

    template <int S>
    PlannerConfig<S> planner_config(const Settings& st)
    {
        PlannerConfig<S> c;
        c.rho = st.number("rho", c.rho);
        if (st.has("limits"))
        {
            const auto xs = detail::to_doubles("limits", st.text("limits", ""));
            if (static_cast<int>(xs.size()) != S)
            {
                throw ConfigError("limits needs exactly " + std::to_string(S) + " values for order " + std::to_string(S));
            }
            for (int k = 0; k < S; ++k)
            {
                c.limits[k] = xs[k];
            }
        }
        c.inflation = st.number("inflation", c.inflation);
        c.check_dt = st.number("check_dt", c.check_dt);
        c.check_clearance = st.number("check_clearance", c.check_clearance);
        c.near_radius = st.number("near_radius", c.near_radius);
        c.near_factor = st.number("near_factor", c.near_factor);
        if (st.has("exact_near"))
        {
            c.exact_near = detail::to_bool("exact_near", st.text("exact_near", ""));
        }
        c.goal_bias = st.number("goal_bias", c.goal_bias);
        c.goal_region = st.number("goal_region", c.goal_region);
        c.sample_speed = st.number("sample_speed", c.sample_speed);
        c.seed = static_cast<std::uint64_t>(st.integer("seed", 0));
        c.time_budget = st.number("budget_s", c.time_budget);
        c.node_budget = static_cast<std::size_t>(st.integer("node_budget", 0));
        c.iteration_budget = static_cast<std::size_t>(st.integer("iteration_budget", 0));
        if (st.has("scheme"))
        {
            c.scheme = parse_scheme(st.text("scheme", ""));
        }
        if (st.has("variant"))
        {
            c.variant = parse_variant(st.text("variant", ""));
        }
        const std::string deform = st.text("deform", "st");
        if (deform == "off")
        {
            c.variant = DeformVariant::off;
        }
        c.mode = deform == "s" ? DeformMode::spatial : DeformMode::spatio_temporal;
        if (st.has("penalty.weights"))
        {
            const auto xs = detail::to_doubles("penalty.weights", st.text("penalty.weights", ""));
            if (static_cast<int>(xs.size()) != S + 1)
            {
                throw ConfigError("penalty.weights needs exactly " + std::to_string(S + 1) + " values");
            }
            for (int k = 0; k <= S; ++k)
            {
                c.penalty.weights[k] = xs[k];
            }
        }
        c.penalty.clearance = st.number("penalty.clearance", c.inflation);
        c.penalty.spacing = st.number("penalty.spacing", c.penalty.spacing);
        c.nsopt_iterations = static_cast<int>(st.integer("nsopt.iterations", c.nsopt_iterations));
        c.nsopt_evaluations = static_cast<int>(st.integer("nsopt.evaluations", c.nsopt_evaluations));
        c.nsopt_tolerance = st.number("nsopt.tolerance", c.nsopt_tolerance);
        c.nsopt_memory = static_cast<int>(st.integer("nsopt.memory", c.nsopt_memory));
        c.start = st.has("start") ? detail::to_vec3("start", st.text("start", "")) : Eigen::Vector3d(2.0, 2.0, 2.0);
        c.goal = st.has("goal") ? detail::to_vec3("goal", st.text("goal", "")) : Eigen::Vector3d(48.0, 28.0, 2.0);
        try
        {
            c.validate();
        }
        catch (const std::invalid_argument& e)
        {
            throw ConfigError(e.what());
        }
        return c;
    }

    // ---------------------------------------------------------------------
    // Map generation

    enum class MapKind
    {
        forest, // vertical cylinders through the full height
        cave,   // walls across x with one opening each
    };

    struct MapSpec
    {
        MapKind kind = MapKind::forest;
        Eigen::Vector3d size{50.0, 30.0, 5.0};
        double resolution = 0.1;
        int obstacles = 120; // cylinders (forest)
        double radius_min = 0.3;
        double radius_max = 0.8;
        int walls = 6;       // cave walls
        double gap = 3.0;    // cave opening width
        double keep_free = 1.5;
        double inflation = 0.2; // used for the connectivity check
        std::uint64_t seed = 0;
    };

    inline MapSpec map_spec(const Settings& st)
    {
        MapSpec m;
        m.kind = st.text("map.kind", "forest") == "cave" ? MapKind::cave : MapKind::forest;
        if (st.has("map.size"))
        {
            m.size = detail::to_vec3("map.size", st.text("map.size", ""));
        }
        m.resolution = st.number("map.resolution", m.resolution);
        m.obstacles = static_cast<int>(st.integer("map.obstacles", m.obstacles));
        m.radius_min = st.number("map.radius_min", m.radius_min);
        m.radius_max = st.number("map.radius_max", m.radius_max);
        m.walls = static_cast<int>(st.integer("map.walls", m.walls));
        m.gap = st.number("map.gap", m.gap);
        m.keep_free = st.number("map.keep_free", m.keep_free);
        m.inflation = st.number("inflation", m.inflation);
        m.seed = static_cast<std::uint64_t>(st.integer("map.seed", 0));
        return m;
    }

    /// Breadth-first search on a coarse grid (blocks of `factor`^3 cells, a block
    /// is blocked when any of its cells is occupied). 6-connected.
    inline bool coarse_connected(const OccupancyGrid& grid, const Eigen::Vector3d& a, const Eigen::Vector3d& b, int factor = 4)
    {
        const Eigen::Vector3i n = grid.dims();
        const Eigen::Vector3i cn = (n.array() + factor - 1) / factor;
        std::vector<std::uint8_t> blocked(static_cast<std::size_t>(cn.prod()), 0);
        auto cidx = [&](int i, int j, int k)
        { return static_cast<std::size_t>(i) + static_cast<std::size_t>(cn.x()) * (j + static_cast<std::size_t>(cn.y()) * k); };
        for (int k = 0; k < n.z(); ++k)
        {
            for (int j = 0; j < n.y(); ++j)
            {
                for (int i = 0; i < n.x(); ++i)
                {
                    if (grid.occupied(i, j, k))
                    {
                        blocked[cidx(i / factor, j / factor, k / factor)] = 1;
                    }
                }
            }
        }
        if (!grid.in_bounds(a) || !grid.in_bounds(b))
        {
            return false;
        }
        const Eigen::Vector3i ca = grid.cell_of(a) / factor, cb = grid.cell_of(b) / factor;
        if (blocked[cidx(ca.x(), ca.y(), ca.z())] || blocked[cidx(cb.x(), cb.y(), cb.z())])
        {
            return false;
        }
        std::vector<std::uint8_t> seen(blocked.size(), 0);
        std::vector<Eigen::Vector3i> queue{ca};
        seen[cidx(ca.x(), ca.y(), ca.z())] = 1;
        const int dirs[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
        for (std::size_t q = 0; q < queue.size(); ++q)
        {
            const Eigen::Vector3i c = queue[q];
            if (c == cb)
            {
                return true;
            }
            for (const auto& d : dirs)
            {
                const Eigen::Vector3i m(c.x() + d[0], c.y() + d[1], c.z() + d[2]);
                if ((m.array() < 0).any() || (m.array() >= cn.array()).any())
                {
                    continue;
                }
                const auto id = cidx(m.x(), m.y(), m.z());
                if (!blocked[id] && !seen[id])
                {
                    seen[id] = 1;
                    queue.push_back(m);
                }
            }
        }
        return false;
    }

    /// Deterministic map from spec.seed. Cells within keep_free of start or goal
    /// stay free. Throws GenerationError when the inflated map has no coarse path.
    inline OccupancyGrid generate_map(const MapSpec& spec, const Eigen::Vector3d& start, const Eigen::Vector3d& goal)
    {
        if (!(spec.resolution > 0.0) || (spec.size.array() <= 0.0).any() || spec.obstacles < 0 ||
            spec.radius_min < 0.0 || spec.radius_max < spec.radius_min || spec.walls < 0 || spec.gap < 0.0)
        {
            throw GenerationError("invalid map spec");
        }
        const Eigen::Vector3i dims = (spec.size / spec.resolution).array().round().cast<int>().max(1);
        OccupancyGrid g(dims, spec.resolution, Eigen::Vector3d::Zero());
        std::mt19937_64 rng(spec.seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);

        auto keep = [&](const Eigen::Vector3d& c)
        {
            return (c - start).norm() < spec.keep_free || (c - goal).norm() < spec.keep_free;
        };
        auto fill_if = [&](auto&& inside)
        {
            for (int k = 0; k < dims.z(); ++k)
            {
                for (int j = 0; j < dims.y(); ++j)
                {
                    for (int i = 0; i < dims.x(); ++i)
                    {
                        const Eigen::Vector3d c = g.center(i, j, k);
                        if (inside(c) && !keep(c))
                        {
                            g.set(i, j, k, true);
                        }
                    }
                }
            }
        };

        if (spec.kind == MapKind::forest)
        {
            for (int o = 0; o < spec.obstacles; ++o)
            {
                const double cx = u(rng) * spec.size.x(), cy = u(rng) * spec.size.y();
                const double r = spec.radius_min + u(rng) * (spec.radius_max - spec.radius_min);
                const int i0 = std::max(0, static_cast<int>((cx - r) / spec.resolution) - 1);
                const int i1 = std::min(dims.x() - 1, static_cast<int>((cx + r) / spec.resolution) + 1);
                const int j0 = std::max(0, static_cast<int>((cy - r) / spec.resolution) - 1);
                const int j1 = std::min(dims.y() - 1, static_cast<int>((cy + r) / spec.resolution) + 1);
                for (int k = 0; k < dims.z(); ++k)
                {
                    for (int j = j0; j <= j1; ++j)
                    {
                        for (int i = i0; i <= i1; ++i)
                        {
                            const Eigen::Vector3d c = g.center(i, j, k);
                            if (std::hypot(c.x() - cx, c.y() - cy) <= r && !keep(c))
                            {
                                g.set(i, j, k, true);
                            }
                        }
                    }
                }
            }
        }
        else
        {
            const double thickness = std::max(spec.resolution, 0.3);
            for (int w = 0; w < spec.walls; ++w)
            {
                const double x = spec.size.x() * (w + 1) / (spec.walls + 1);
                const double gy = spec.gap * 0.5 + u(rng) * std::max(0.0, spec.size.y() - spec.gap);
                const double gz = spec.gap * 0.5 + u(rng) * std::max(0.0, spec.size.z() - spec.gap);
                fill_if([&](const Eigen::Vector3d& c)
                        {
                            const bool in_wall = std::abs(c.x() - x) <= 0.5 * thickness;
                            const bool in_gap = std::abs(c.y() - gy) <= 0.5 * spec.gap && std::abs(c.z() - gz) <= 0.5 * spec.gap;
                            return in_wall && !in_gap;
                        });
            }
        }

        if (!coarse_connected(inflate(g, spec.inflation), start, goal))
        {
            throw GenerationError("generated map has no free path between start and goal");
        }
        return g;
    }

    // ---------------------------------------------------------------------
    // Batches and tables

    struct TrialRecord
    {
        std::uint64_t seed = 0;
        std::vector<LogEntry> log;
        double final_cost = std::numeric_limits<double>::infinity();
        double first_solution_time = std::numeric_limits<double>::quiet_NaN();
        int node_count = 0;
        double tree_cost = 0.0; // sum of g over the final tree
        std::string error;      // non-empty when the trial threw

        bool solved() const { return std::isfinite(final_cost); }

        /// Best cost known at time t (infinity before the first solution).
        double cost_at(double t) const
        {
            double c = std::numeric_limits<double>::infinity();
            for (const auto& e : log)
            {
                if (e.wall_time > t)
                {
                    break;
                }
                c = e.best_cost;
            }
            return c;
        }
    };

    struct BatchResult
    {
        std::vector<Method> methods;
        std::vector<std::vector<TrialRecord>> trials; // [method][trial]
    };

    template <int S>
    TrialRecord summarize(const RunReport<S>& r, std::uint64_t seed)
    {
        TrialRecord t;
        t.seed = seed;
        t.log = r.log;
        t.final_cost = r.best.cost;
        t.first_solution_time = r.first_solution_time;
        t.node_count = r.node_count;
        t.tree_cost = r.tree ? r.tree->total_cost() : 0.0;
        return t;
    }

    /// Trial t of every method runs with seed base_seed + t on the same environment.
    /// Trials are distributed over `threads` workers; results land in fixed slots,
    /// so the output does not depend on scheduling.
    template <int S>
    BatchResult run_batch(const Environment& env, const PlannerConfig<S>& base, const std::vector<Method>& methods,
                          int trials, int threads = 1)
    {
        if (trials < 1 || methods.empty())
        {
            throw std::invalid_argument("run_batch needs at least one trial and one method");
        }
        BatchResult out;
        out.methods = methods;
        out.trials.assign(methods.size(), std::vector<TrialRecord>(static_cast<std::size_t>(trials)));
        const std::size_t jobs = methods.size() * static_cast<std::size_t>(trials);
        std::atomic<std::size_t> next{0};
        auto worker = [&]
        {
            for (std::size_t job = next++; job < jobs; job = next++)
            {
                // Trial-major order keeps paired runs close together in time.
                const std::size_t t = job / methods.size(), m = job % methods.size();
                PlannerConfig<S> cfg = base;
                cfg.scheme = methods[m].scheme;
                cfg.variant = methods[m].variant;
                cfg.mode = methods[m].mode;
                cfg.seed = base.seed + t;
                TrialRecord rec;
                try
                {
                    rec = summarize(plan<S>(cfg, env), cfg.seed);
                }
                catch (const std::exception& e)
                {
                    rec.seed = cfg.seed;
                    rec.error = e.what();
                }
                out.trials[m][t] = std::move(rec);
            }
        };
        const int n = std::max(1, std::min<int>(threads, static_cast<int>(jobs)));
        if (n == 1)
        {
            worker();
        }
        else
        {
            std::vector<std::thread> pool;
            for (int i = 0; i < n; ++i)
            {
                pool.emplace_back(worker);
            }
            for (auto& th : pool)
            {
                th.join();
            }
        }
        return out;
    }

    struct ConvergenceRow
    {
        double bin_start = 0.0;
        std::string method;
        double mean_cost = std::numeric_limits<double>::quiet_NaN();
        double std_cost = std::numeric_limits<double>::quiet_NaN();
        int n_solved = 0;
    };

    struct ConvergenceTable
    {
        double bin = 0.05;
        std::vector<ConvergenceRow> rows;
    };

    /// Per bin [b, b + bin): mean and sample standard deviation of the best cost
    /// at the end of the bin over the trials that have a solution by then.
    inline ConvergenceTable convergence_table(const BatchResult& batch, double horizon, double bin = 0.05)
    {
        if (!(bin > 0.0) || !(horizon > 0.0))
        {
            throw std::invalid_argument("bin width and horizon must be positive");
        }
        ConvergenceTable tab;
        tab.bin = bin;
        const int bins = static_cast<int>(std::ceil(horizon / bin - 1e-9));
        for (int b = 0; b < bins; ++b)
        {
            const double start = b * bin, end = start + bin;
            for (std::size_t m = 0; m < batch.methods.size(); ++m)
            {
                ConvergenceRow row;
                row.bin_start = start;
                row.method = batch.methods[m].label();
                std::vector<double> costs;
                for (const auto& t : batch.trials[m])
                {
                    const double c = t.cost_at(end);
                    if (std::isfinite(c))
                    {
                        costs.push_back(c);
                    }
                }
                row.n_solved = static_cast<int>(costs.size());
                if (!costs.empty())
                {
                    double mean = 0.0;
                    for (double c : costs)
                    {
                        mean += c;
                    }
                    mean /= costs.size();
                    double var = 0.0;
                    for (double c : costs)
                    {
                        var += (c - mean) * (c - mean);
                    }
                    row.mean_cost = mean;
                    row.std_cost = costs.size() > 1 ? std::sqrt(var / (costs.size() - 1)) : 0.0;
                }
                tab.rows.push_back(row);
            }
        }
        return tab;
    }

    inline double median(std::vector<double> v)
    {
        if (v.empty())
        {
            return std::numeric_limits<double>::quiet_NaN();
        }
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }

    /// Median of the final costs, unsolved trials counted as +infinity.
    inline double median_final_cost(const std::vector<TrialRecord>& trials)
    {
        std::vector<double> v;
        for (const auto& t : trials)
        {
            v.push_back(t.final_cost);
        }
        return median(v);
    }

    /// Median time to the first solution, unsolved trials counted as +infinity.
    inline double median_first_solution(const std::vector<TrialRecord>& trials)
    {
        std::vector<double> v;
        for (const auto& t : trials)
        {
            v.push_back(t.solved() ? t.first_solution_time : std::numeric_limits<double>::infinity());
        }
        return median(v);
    }

    // ---------------------------------------------------------------------
    // CSV / SVG output

    namespace detail
    {
        inline std::string num(double v)
        {
            if (std::isnan(v))
            {
                return "nan";
            }
            if (std::isinf(v))
            {
                return v > 0 ? "inf" : "-inf";
            }
            char buf[64];
            const auto res = std::to_chars(buf, buf + sizeof(buf), v);
            return std::string(buf, res.ptr);
        }
    } // namespace detail

    inline void write_table_csv(std::ostream& os, const ConvergenceTable& tab)
    {
        os << "bin_start_s,method,mean_cost,std_cost,n_solved\n";
        for (const auto& r : tab.rows)
        {
            os << detail::num(r.bin_start) << ',' << r.method << ',' << detail::num(r.mean_cost) << ','
               << detail::num(r.std_cost) << ',' << r.n_solved << '\n';
        }
    }

    inline void write_log_csv(std::ostream& os, const std::vector<LogEntry>& log)
    {
        os << "wall_time_s,best_cost,node_count\n";
        for (const auto& e : log)
        {
            os << detail::num(e.wall_time) << ',' << detail::num(e.best_cost) << ',' << e.node_count << '\n';
        }
    }

    inline void write_summary_csv(std::ostream& os, const BatchResult& batch)
    {
        os << "method,trials,solved,median_first_solution_s,median_final_cost,mean_tree_cost\n";
        for (std::size_t m = 0; m < batch.methods.size(); ++m)
        {
            const auto& ts = batch.trials[m];
            int solved = 0;
            double tree = 0.0;
            for (const auto& t : ts)
            {
                solved += t.solved() ? 1 : 0;
                tree += t.tree_cost;
            }
            os << batch.methods[m].label() << ',' << ts.size() << ',' << solved << ','
               << detail::num(median_first_solution(ts)) << ',' << detail::num(median_final_cost(ts)) << ','
               << detail::num(tree / ts.size()) << '\n';
        }
    }

    inline constexpr double kExportStep = 0.01;

    /// Samples a chain of edges every `dt` seconds of global time, plus the final endpoint.
    template <int S>
    void write_trajectory_csv(std::ostream& os, const std::vector<PolyEdge<S>>& edges, double dt = kExportStep)
    {
        os << "t,x,y,z,vx,vy,vz,ax,ay,az\n";
        auto row = [&](double t, const PolyEdge<S>& e, double local)
        {
            const Eigen::Vector3d p = e.eval(local, 0), v = e.eval(local, 1), a = e.eval(local, 2);
            os << detail::num(t);
            for (const auto* vec : {&p, &v, &a})
            {
                for (int i = 0; i < 3; ++i)
                {
                    os << ',' << detail::num((*vec)[i]);
                }
            }
            os << '\n';
        };
        double offset = 0.0;
        long long step = 0;
        for (std::size_t i = 0; i < edges.size(); ++i)
        {
            const auto& e = edges[i];
            for (double t = step * dt; t < offset + e.duration - 1e-12; t = (++step) * dt)
            {
                row(t, e, t - offset);
            }
            offset += e.duration;
        }
        if (!edges.empty())
        {
            row(offset, edges.back(), edges.back().duration);
        }
    }

    /// Every tree edge sampled at dt; `edge` is the id of the child node.
    template <int S>
    void write_tree_csv(std::ostream& os, const TrajTree<S>& tree, double dt = kExportStep)
    {
        os << "edge,t,x,y,z\n";
        for (int id = 1; id < tree.size(); ++id)
        {
            const auto& e = tree.node(id).edge;
            const int n = std::max(1, static_cast<int>(std::ceil(e.duration / dt - 1e-9)));
            for (int s = 0; s <= n; ++s)
            {
                const double t = std::min(s * dt, e.duration);
                const Eigen::Vector3d p = e.position(t);
                os << id << ',' << detail::num(t) << ',' << detail::num(p.x()) << ',' << detail::num(p.y()) << ','
                   << detail::num(p.z()) << '\n';
            }
        }
    }

    /// Top-down (z-projected) picture: occupied columns in grey, tree in light
    /// blue, best trajectory in red.
    template <int S>
    void write_svg(std::ostream& os, const OccupancyGrid& map, const TrajTree<S>* tree, const Solution<S>* best,
                   double pixels_per_meter = 20.0)
    {
        const Eigen::Vector3d ext = map.extent();
        const double w = ext.x() * pixels_per_meter, h = ext.y() * pixels_per_meter;
        auto px = [&](const Eigen::Vector3d& p)
        {
            const Eigen::Vector3d q = p - map.origin();
            return detail::num(q.x() * pixels_per_meter) + "," + detail::num(h - q.y() * pixels_per_meter);
        };
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::num(w) << "\" height=\"" << detail::num(h)
           << "\" viewBox=\"0 0 " << detail::num(w) << ' ' << detail::num(h) << "\">\n";
        os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g fill=\"#555\">\n";
        const auto& n = map.dims();
        const double cell = map.resolution() * pixels_per_meter;
        for (int j = 0; j < n.y(); ++j)
        {
            for (int i = 0; i < n.x(); ++i)
            {
                bool occ = false;
                for (int k = 0; k < n.z() && !occ; ++k)
                {
                    occ = map.occupied(i, j, k);
                }
                if (occ)
                {
                    os << "<rect x=\"" << detail::num(i * cell) << "\" y=\"" << detail::num(h - (j + 1) * cell) << "\" width=\""
                       << detail::num(cell) << "\" height=\"" << detail::num(cell) << "\"/>\n";
                }
            }
        }
        os << "</g>\n";
        auto polyline = [&](const PolyEdge<S>& e, const char* style)
        {
            os << "<polyline " << style << " points=\"";
            const int steps = std::max(2, static_cast<int>(std::ceil(e.duration / 0.05)));
            for (int s = 0; s <= steps; ++s)
            {
                os << (s ? " " : "") << px(e.position(e.duration * s / steps));
            }
            os << "\"/>\n";
        };
        if (tree)
        {
            for (int id = 1; id < tree->size(); ++id)
            {
                polyline(tree->node(id).edge, "fill=\"none\" stroke=\"#7fb3ff\" stroke-width=\"1\"");
            }
        }
        if (best && best->found())
        {
            for (const auto& e : best->edges)
            {
                polyline(e, "fill=\"none\" stroke=\"#d62728\" stroke-width=\"2.5\"");
            }
        }
        os << "</svg>\n";
    }

} // namespace kdt::bench
