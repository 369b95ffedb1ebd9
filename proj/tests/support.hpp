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

// Helpers and brute-force oracles shared by the unit tests and the acceptance runner.

#include "kdt/deform.hpp"
#include "kdt/env_field.hpp"
#include "kdt/poly_edge.hpp"
#include "kdt/traj_tree.hpp"

#include <limits>
#include <random>
#include <set>
#include <vector>

namespace kdt::testing
{

    inline Environment free_environment(const Eigen::Vector3d& size = Eigen::Vector3d(20.0, 20.0, 6.0), double res = 0.2)
    {
        const Eigen::Vector3i dims = (size / res).array().round().cast<int>();
        return Environment::build(OccupancyGrid(dims, res, Eigen::Vector3d::Zero()), 0.2);
    }

    /// Random boxes and spheres on a 20 x 20 x 6 m map; the first `keep` list stays free.
    inline Environment cluttered_environment(std::uint64_t seed, int obstacles = 25, double res = 0.1,
                                             const std::vector<Eigen::Vector3d>& keep = {})
    {
        const Eigen::Vector3d size(20.0, 20.0, 6.0);
        const Eigen::Vector3i dims = (size / res).array().round().cast<int>();
        OccupancyGrid g(dims, res, Eigen::Vector3d::Zero());
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int o = 0; o < obstacles; ++o)
        {
            const Eigen::Vector3d c(u(rng) * size.x(), u(rng) * size.y(), u(rng) * size.z());
            const double r = 0.4 + 1.2 * u(rng);
            const bool sphere = u(rng) < 0.5;
            for (int k = 0; k < dims.z(); ++k)
            {
                for (int j = 0; j < dims.y(); ++j)
                {
                    for (int i = 0; i < dims.x(); ++i)
                    {
                        const Eigen::Vector3d p = g.center(i, j, k);
                        const Eigen::Vector3d d = (p - c).cwiseAbs();
                        const bool in = sphere ? d.norm() <= r : (d.array() <= r).all();
                        bool kept = false;
                        for (const auto& q : keep)
                        {
                            kept = kept || (p - q).norm() < 1.0;
                        }
                        if (in && !kept)
                        {
                            g.set(i, j, k, true);
                        }
                    }
                }
            }
        }
        return Environment::build(std::move(g), 0.2);
    }

    template <int S>
    State<S> random_state(std::mt19937_64& rng, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, double speed = 2.0)
    {
        std::uniform_real_distribution<double> u(0.0, 1.0), v(-1.0, 1.0);
        State<S> x = State<S>::Zero();
        for (int a = 0; a < 3; ++a)
        {
            x(0, a) = lo[a] + u(rng) * (hi[a] - lo[a]);
            x(1, a) = speed * v(rng) / std::sqrt(3.0);
        }
        for (int k = 2; k < S; ++k)
        {
            for (int a = 0; a < 3; ++a)
            {
                x(k, a) = 0.5 * v(rng);
            }
        }
        return x;
    }

    /// Tree whose nodes hang off uniformly chosen earlier nodes with optimal-duration
    /// edges; obstacles are ignored.
    template <int S>
    TrajTree<S> random_tree(std::mt19937_64& rng, int nodes, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                            double rho = 100.0)
    {
        TrajTree<S> tree(PlannerConfig<S>::rest_state(0.5 * (lo + hi)), PlannerConfig<S>::rest_state(hi), lo, hi);
        for (int i = 1; i < nodes; ++i)
        {
            const int parent = std::uniform_int_distribution<int>(0, tree.size() - 1)(rng);
            const State<S> x = random_state<S>(rng, lo, hi);
            tree.insert(parent, x, solve_optimal_edge<S>(tree.node(parent).state, x, rho));
        }
        return tree;
    }

    /// Grid with each cell occupied independently with probability `density`.
    inline OccupancyGrid random_grid(std::uint64_t seed, int n, double density, double res = 0.1)
    {
        std::mt19937_64 rng(seed);
        std::bernoulli_distribution occ(density);
        OccupancyGrid g(Eigen::Vector3i(n, n, n), res, Eigen::Vector3d(-0.3, 0.2, 0.0));
        for (int k = 0; k < n; ++k)
        {
            for (int j = 0; j < n; ++j)
            {
                for (int i = 0; i < n; ++i)
                {
                    g.set(i, j, k, occ(rng));
                }
            }
        }
        return g;
    }

    /// Cell-center distance to the nearest occupied cell by scanning all of them.
    inline std::vector<double> brute_force_distance(const OccupancyGrid& g)
    {
        std::vector<Eigen::Vector3i> occ;
        const auto& n = g.dims();
        for (int k = 0; k < n.z(); ++k)
        {
            for (int j = 0; j < n.y(); ++j)
            {
                for (int i = 0; i < n.x(); ++i)
                {
                    if (g.occupied(i, j, k))
                    {
                        occ.emplace_back(i, j, k);
                    }
                }
            }
        }
        std::vector<double> out(g.size());
        for (int k = 0; k < n.z(); ++k)
        {
            for (int j = 0; j < n.y(); ++j)
            {
                for (int i = 0; i < n.x(); ++i)
                {
                    double best = std::numeric_limits<double>::infinity();
                    for (const auto& o : occ)
                    {
                        best = std::min(best, (o - Eigen::Vector3i(i, j, k)).cast<double>().squaredNorm());
                    }
                    out[g.index(i, j, k)] = std::sqrt(best) * g.resolution();
                }
            }
        }
        return out;
    }

    /// Composite Gauss-Legendre (5 points per panel) of the squared S-th derivative.
    template <int S>
    double control_energy_quadrature(const PolyEdge<S>& e, int panels = 200)
    {
        const double xs[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640};
        const double ws[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665, 0.2369268850561891};
        const double h = e.duration / panels;
        double s = 0.0;
        for (int p = 0; p < panels; ++p)
        {
            const double mid = (p + 0.5) * h;
            for (int q = 0; q < 5; ++q)
            {
                s += ws[q] * 0.5 * h * e.eval(mid + 0.5 * h * xs[q], S).squaredNorm();
            }
        }
        return s;
    }

    /// Node ids within `radius` transition cost of x by scoring every node; the
    /// cheapest node alone when none qualifies. The goal node is skipped.
    template <int S>
    std::set<int> near_oracle(const TrajTree<S>& tree, const State<S>& x, double rho, double radius)
    {
        std::set<int> out;
        int cheapest = -1;
        double cheapest_cost = std::numeric_limits<double>::infinity();
        for (int id = 0; id < tree.size(); ++id)
        {
            if (tree.node(id).is_goal)
            {
                continue;
            }
            const double c = optimal_duration<S>(tree.node(id).state, x, rho).cost;
            if (c <= radius)
            {
                out.insert(id);
            }
            if (c < cheapest_cost)
            {
                cheapest_cost = c;
                cheapest = id;
            }
        }
        if (out.empty() && cheapest >= 0)
        {
            out.insert(cheapest);
        }
        return out;
    }

    /// Candidate with the lowest g + edge cost whose edge passes the hard check; -1 if none.
    template <int S>
    int parent_oracle(const TrajTree<S>& tree, const std::vector<NearCandidate>& cands, const State<S>& x,
                      const Environment& env, const PlannerConfig<S>& cfg)
    {
        int best = -1;
        double best_total = std::numeric_limits<double>::infinity();
        for (const auto& c : cands)
        {
            const auto e = solve_edge<S>(tree.node(c.id).state, x, c.duration, cfg.rho);
            const double total = tree.node(c.id).g + c.cost;
            if (total < best_total && check_edge<S>(e, env, cfg.limits, cfg.check_clearance, cfg.check_dt))
            {
                best_total = total;
                best = c.id;
            }
        }
        return best;
    }

    /// Field-by-field exact equality, used to assert that a node was not touched.
    template <int S>
    bool same_node(const TreeNode<S>& a, const TreeNode<S>& b)
    {
        return a.state == b.state && a.parent == b.parent && a.edge.coeffs == b.edge.coeffs &&
               a.edge.duration == b.edge.duration && a.edge.cost == b.edge.cost && a.children == b.children &&
               a.g == b.g && a.descendants == b.descendants && a.is_goal == b.is_goal;
    }

    /// g recomputed by summing edge costs along the parent chain.
    template <int S>
    double path_cost(const TrajTree<S>& tree, int id)
    {
        double g = 0.0;
        for (int v = id; v > 0; v = tree.node(v).parent)
        {
            g += tree.node(v).edge.cost;
        }
        return g;
    }

    /// 1 + number of descendants, by explicit DFS.
    template <int S>
    int dfs_weight(const TrajTree<S>& tree, int id)
    {
        int count = 0;
        std::vector<int> stack{id};
        while (!stack.empty())
        {
            const int v = stack.back();
            stack.pop_back();
            ++count;
            for (int c : tree.node(v).children)
            {
                stack.push_back(c);
            }
        }
        return count;
    }

    /// Penalty integral by dense trapezoid with `samples` intervals (same integrand as edge_penalty).
    template <int S>
    double dense_penalty(const PolyEdge<S>& e, const DistanceField& field, const PenaltyConfig<S>& pen,
                         const Eigen::Matrix<double, S, 1>& limits, int samples)
    {
        double total = 0.0;
        for (int j = 0; j <= samples; ++j)
        {
            const double t = e.duration * j / samples;
            const double w = (j == 0 || j == samples) ? 0.5 : 1.0;
            double g = pen.weights[0] * std::max(0.0, pen.clearance - field.query(e.position(t)).value);
            for (int m = 1; m <= S; ++m)
            {
                g += pen.weights[m] * std::max(0.0, e.eval(t, m).squaredNorm() - limits[m - 1] * limits[m - 1]);
            }
            total += w * g;
        }
        return total * e.duration / samples;
    }

} // namespace kdt::testing
