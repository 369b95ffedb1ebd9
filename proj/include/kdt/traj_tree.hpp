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
#include "kdt/poly_edge.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kdt
{

    enum class GrowthScheme
    {
        krrt,       // connect to the cheapest reachable node only
        krrt_star,  // best parent + one level of rewiring
        krrt_sharp, // best parent + cascaded rewiring
    };

    enum class DeformVariant
    {
        off,
        node,
        trunk,
        branch,
        tree,
    };

    enum class DeformMode
    {
        spatial,         // node state only, durations frozen
        spatio_temporal, // node state and the durations of its edges
    };

    class ConsistencyError : public std::logic_error
    {
    public:
        using std::logic_error::logic_error;
    };

    class SamplingError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Soft-constraint settings for deformation.
    template <int S>
    struct PenaltyConfig
    {
        // Obstacle weight first, then one weight per derivative order 1..S.
        Eigen::Matrix<double, S + 1, 1> weights = default_weights();
        double clearance = 0.2; // preferred distance to the raw (uninflated) obstacles
        double spacing = 0.05;  // seconds per penalty sample

        static Eigen::Matrix<double, S + 1, 1> default_weights()
        {
            Eigen::Matrix<double, S + 1, 1> w = Eigen::Matrix<double, S + 1, 1>::Constant(1e3);
            w[0] = 1e4;
            return w;
        }

        void validate() const
        {
            if ((weights.array() < 0.0).any() || !(clearance > 0.0) || !(spacing > 0.0))
            {
                throw std::invalid_argument("penalty weights must be >= 0, clearance and spacing > 0");
            }
        }
    };

    template <int S>
    struct PlannerConfig
    {
        double rho = 100.0;
        // Magnitude limits for derivative orders 1..S (velocity, acceleration, jerk, ...).
        Eigen::Matrix<double, S, 1> limits = default_limits();
        double inflation = 0.2;      // obstacle inflation for hard checks, meters
        double check_dt = kDefaultCheckStep;
        double check_clearance = 0.0; // optional extra distance-field check in check_edge

        double near_radius = 0.0;     // cost radius; <= 0 derives it from the map
        double near_factor = 0.2;
        bool exact_near = false;      // scan every node instead of the reachable ball
        double goal_bias = 0.05;
        double goal_region = 1.0;     // radius of the biased goal sampling ball
        double sample_speed = 0.0;    // radius of the velocity sampling ball; <= 0 uses limits[0]
        std::size_t rewire_pop_limit = 100000;

        std::uint64_t seed = 0;
        double time_budget = 3.0;      // seconds; <= 0 disables
        std::size_t node_budget = 0;   // 0 disables
        std::size_t iteration_budget = 0;

        GrowthScheme scheme = GrowthScheme::krrt_sharp;
        DeformVariant variant = DeformVariant::off;
        DeformMode mode = DeformMode::spatio_temporal;
        PenaltyConfig<S> penalty;
        int nsopt_iterations = 8; // per unit; units are revisited often, throughput wins
        int nsopt_evaluations = 20;
        double nsopt_tolerance = 1e-5;
        int nsopt_memory = 7;

        Eigen::Vector3d start = Eigen::Vector3d::Zero();
        Eigen::Vector3d goal = Eigen::Vector3d::Zero();

        static Eigen::Matrix<double, S, 1> default_limits()
        {
            Eigen::Matrix<double, S, 1> m;
            const double base[4] = {5.0, 7.0, 15.0, 50.0};
            for (int k = 0; k < S; ++k)
            {
                m[k] = base[k];
            }
            return m;
        }

        State<S> start_state() const { return rest_state(start); }
        State<S> goal_state() const { return rest_state(goal); }

        static State<S> rest_state(const Eigen::Vector3d& p)
        {
            State<S> x = State<S>::Zero();
            x.row(0) = p.transpose();
            return x;
        }

        double velocity_limit() const { return limits[0]; }

        double cost_radius(const Environment& env) const
        {
            if (near_radius > 0.0)
            {
                return near_radius;
            }
            return rho * env.raw.extent().norm() / velocity_limit() * near_factor;
        }

        void validate() const
        {
            if (!(rho > 0.0) || (limits.array() <= 0.0).any())
            {
                throw std::invalid_argument("rho and all derivative limits must be positive");
            }
            if (!(check_dt > 0.0) || inflation < 0.0 || goal_bias < 0.0 || goal_bias > 1.0)
            {
                throw std::invalid_argument("invalid planner configuration");
            }
            penalty.validate();
        }
    };

    template <int S>
    struct TreeNode
    {
        EIGEN_MAKE_ALIGNED_OPERATOR_NEW

        State<S> state = State<S>::Zero();
        int parent = -1;
        PolyEdge<S> edge; // from parent; unused for the root
        std::vector<int> children;
        double g = 0.0;      // cost-from-start
        int descendants = 0; // number of nodes below this one
        bool is_goal = false;
    };

    template <int S>
    struct Solution
    {
        std::vector<State<S>> states; // start ... goal
        std::vector<PolyEdge<S>> edges;
        int goal_parent = -1;
        double cost = std::numeric_limits<double>::infinity();

        bool found() const { return std::isfinite(cost); }
        double duration() const
        {
            double t = 0.0;
            for (const auto& e : edges)
            {
                t += e.duration;
            }
            return t;
        }
    };

    /// Uniform bucket grid over node positions, clamped to the map box.
    class SpatialHash
    {
    public:
        SpatialHash() = default;

        SpatialHash(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, double cell)
            : lo_(lo), cell_(cell)
        {
            dims_ = ((hi - lo) / cell).array().ceil().cast<int>().max(1);
            buckets_.resize(static_cast<std::size_t>(dims_.x()) * dims_.y() * dims_.z());
        }

        void insert(int id, const Eigen::Vector3d& p) { buckets_[key(p)].push_back(id); }

        void erase(int id, const Eigen::Vector3d& p)
        {
            auto& b = buckets_[key(p)];
            const auto it = std::find(b.begin(), b.end(), id);
            if (it != b.end())
            {
                *it = b.back();
                b.pop_back();
            }
        }

        template <typename Fn>
        void for_each_near(const Eigen::Vector3d& p, double radius, Fn&& fn) const
        {
            const Eigen::Vector3i a = cell_of(p - Eigen::Vector3d::Constant(radius));
            const Eigen::Vector3i b = cell_of(p + Eigen::Vector3d::Constant(radius));
            for (int k = a.z(); k <= b.z(); ++k)
            {
                for (int j = a.y(); j <= b.y(); ++j)
                {
                    for (int i = a.x(); i <= b.x(); ++i)
                    {
                        for (int id : buckets_[index(i, j, k)])
                        {
                            fn(id);
                        }
                    }
                }
            }
        }

    private:
        Eigen::Vector3i cell_of(const Eigen::Vector3d& p) const
        {
            Eigen::Vector3i c = ((p - lo_) / cell_).array().floor().cast<int>();
            return c.cwiseMax(0).cwiseMin(dims_ - Eigen::Vector3i::Ones());
        }

        std::size_t index(int i, int j, int k) const
        {
            return static_cast<std::size_t>(i) + static_cast<std::size_t>(dims_.x()) * (j + static_cast<std::size_t>(dims_.y()) * k);
        }

        std::size_t key(const Eigen::Vector3d& p) const
        {
            const Eigen::Vector3i c = cell_of(p);
            return index(c.x(), c.y(), c.z());
        }

        Eigen::Vector3d lo_ = Eigen::Vector3d::Zero();
        double cell_ = 1.0;
        Eigen::Vector3i dims_ = Eigen::Vector3i::Ones();
        std::vector<std::vector<int>> buckets_{1};
    };

    /// The trajectory tree. Node 0 is the start; the goal becomes a leaf node
    /// once it is first connected and is only ever re-parented afterwards.
    template <int S>
    class TrajTree
    {
    public:
        TrajTree(const State<S>& start, const State<S>& goal, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                 double hash_cell = 2.0)
            : goal_state_(goal), hash_(lo, hi, hash_cell)
        {
            TreeNode<S> root;
            root.state = start;
            nodes_.push_back(std::move(root));
            hash_.insert(0, position(0));
        }

        static constexpr int start() { return 0; }
        int size() const { return static_cast<int>(nodes_.size()); }
        const TreeNode<S>& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
        const std::vector<TreeNode<S>>& nodes() const { return nodes_; }
        Eigen::Vector3d position(int id) const { return nodes_[id].state.row(0).transpose(); }
        const State<S>& goal_state() const { return goal_state_; }
        int goal() const { return goal_; }
        bool goal_connected() const { return goal_ >= 0; }
        const Solution<S>& best() const { return best_; }

        bool is_leaf(int id) const { return nodes_[id].children.empty(); }

        /// 1 + number of descendants.
        int descendant_weight(int id) const { return 1 + nodes_.at(static_cast<std::size_t>(id)).descendants; }

        /// True when `a` lies on the path from the root to `b` (a node is its own ancestor).
        bool is_ancestor(int a, int b) const
        {
            for (int v = b; v >= 0; v = nodes_[v].parent)
            {
                if (v == a)
                {
                    return true;
                }
            }
            return false;
        }

        std::vector<int> subtree(int id) const
        {
            std::vector<int> out{id};
            for (std::size_t i = 0; i < out.size(); ++i)
            {
                for (int c : nodes_[out[i]].children)
                {
                    out.push_back(c);
                }
            }
            return out;
        }

        int insert(int parent, const State<S>& x, const PolyEdge<S>& edge)
        {
            require_boundary(nodes_.at(static_cast<std::size_t>(parent)).state, x, edge);
            if (nodes_[parent].is_goal)
            {
                throw ConsistencyError("the goal node cannot have children");
            }
            TreeNode<S> n;
            n.state = x;
            n.parent = parent;
            n.edge = edge;
            n.g = nodes_[parent].g + edge.cost;
            const int id = size();
            nodes_.push_back(std::move(n));
            nodes_[parent].children.push_back(id);
            adjust_descendants(parent, 1);
            hash_.insert(id, position(id));
            return id;
        }

        /// Hangs the goal under `parent`, or moves it there if already connected.
        void connect_goal(int parent, const PolyEdge<S>& edge)
        {
            if (goal_ < 0)
            {
                goal_ = insert(parent, goal_state_, edge);
                nodes_[goal_].is_goal = true;
            }
            else
            {
                reparent(goal_, parent, edge);
            }
        }

        void reparent(int v, int u, const PolyEdge<S>& edge)
        {
            if (v == start() || is_ancestor(v, u))
            {
                throw ConsistencyError("reparenting would create a cycle");
            }
            if (nodes_[u].is_goal)
            {
                throw ConsistencyError("the goal node cannot have children");
            }
            require_boundary(nodes_[u].state, nodes_[v].state, edge);
            const int moved = 1 + nodes_[v].descendants;
            const int old = nodes_[v].parent;
            auto& siblings = nodes_[old].children;
            siblings.erase(std::find(siblings.begin(), siblings.end(), v));
            adjust_descendants(old, -moved);
            nodes_[v].parent = u;
            nodes_[v].edge = edge;
            nodes_[u].children.push_back(v);
            adjust_descendants(u, moved);
            refresh_costs(v);
        }

        /// Replaces the state of `n` together with its incoming edge and the edges
        /// to its children (same order as node(n).children).
        void commit_unit(int n, const State<S>& x, const PolyEdge<S>& in_edge, const std::vector<PolyEdge<S>>& child_edges)
        {
            auto& node = nodes_[n];
            if (child_edges.size() != node.children.size())
            {
                throw ConsistencyError("deformation unit edge count mismatch");
            }
            hash_.erase(n, position(n));
            node.state = x;
            node.edge = in_edge;
            for (std::size_t i = 0; i < child_edges.size(); ++i)
            {
                nodes_[node.children[i]].edge = child_edges[i];
            }
            hash_.insert(n, position(n));
            refresh_costs(n);
        }

        /// Recomputes g over the subtree rooted at `id` from the stored edges.
        void refresh_costs(int id)
        {
            std::vector<int> stack{id};
            while (!stack.empty())
            {
                const int v = stack.back();
                stack.pop_back();
                if (v != start())
                {
                    nodes_[v].g = nodes_[nodes_[v].parent].g + nodes_[v].edge.cost;
                }
                for (int c : nodes_[v].children)
                {
                    stack.push_back(c);
                }
            }
        }

        template <typename Fn>
        void for_each_near(const Eigen::Vector3d& p, double radius, Fn&& fn) const
        {
            hash_.for_each_near(p, radius, std::forward<Fn>(fn));
        }

        /// Sum of cost-from-start over all nodes, equal to the descendant-weighted edge sum.
        double total_cost() const
        {
            double s = 0.0;
            for (const auto& n : nodes_)
            {
                s += n.g;
            }
            return s;
        }

        /// Snapshots the current start-to-goal path when it beats the best so far.
        bool refresh_best()
        {
            if (goal_ < 0 || !(nodes_[goal_].g < best_.cost))
            {
                return false;
            }
            Solution<S> sol;
            sol.cost = nodes_[goal_].g;
            sol.goal_parent = nodes_[goal_].parent;
            for (int v = goal_; v >= 0; v = nodes_[v].parent)
            {
                sol.states.push_back(nodes_[v].state);
                if (v != start())
                {
                    sol.edges.push_back(nodes_[v].edge);
                }
            }
            std::reverse(sol.states.begin(), sol.states.end());
            std::reverse(sol.edges.begin(), sol.edges.end());
            best_ = std::move(sol);
            return true;
        }

        /// Full invariant audit; returns an empty string when the tree is sound.
        std::string audit(double g_tol = 1e-6, double boundary_tol = 1e-8) const
        {
            std::ostringstream why;
            if (nodes_.empty() || nodes_[0].parent != -1)
            {
                return "missing root";
            }
            std::vector<int> seen(nodes_.size(), 0);
            for (int id : subtree(0))
            {
                if (seen[id]++)
                {
                    return "node reached twice";
                }
            }
            for (int id = 0; id < size(); ++id)
            {
                const auto& n = nodes_[id];
                if (!seen[id])
                {
                    why << "node " << id << " unreachable from root";
                    return why.str();
                }
                if (id != 0)
                {
                    const auto& sib = nodes_[n.parent].children;
                    if (std::count(sib.begin(), sib.end(), id) != 1)
                    {
                        why << "node " << id << " missing from its parent's children";
                        return why.str();
                    }
                    const double expect = nodes_[n.parent].g + n.edge.cost;
                    if (std::abs(n.g - expect) > g_tol * std::max(1.0, std::abs(expect)))
                    {
                        why << "g mismatch at " << id << ": " << n.g << " vs " << expect;
                        return why.str();
                    }
                    const State<S> head = n.edge.state(0.0), tail = n.edge.state(n.edge.duration);
                    const double scale = std::max({1.0, nodes_[n.parent].state.cwiseAbs().maxCoeff(), n.state.cwiseAbs().maxCoeff()});
                    if ((head - nodes_[n.parent].state).cwiseAbs().maxCoeff() > boundary_tol * scale ||
                        (tail - n.state).cwiseAbs().maxCoeff() > boundary_tol * scale)
                    {
                        why << "edge into " << id << " does not interpolate its endpoints";
                        return why.str();
                    }
                }
                for (int c : n.children)
                {
                    if (nodes_[c].parent != id)
                    {
                        why << "child " << c << " of " << id << " points elsewhere";
                        return why.str();
                    }
                }
                if (n.descendants != static_cast<int>(subtree(id).size()) - 1)
                {
                    why << "descendant count stale at " << id;
                    return why.str();
                }
            }
            return {};
        }

    private:
        void adjust_descendants(int from, int delta)
        {
            for (int v = from; v >= 0; v = nodes_[v].parent)
            {
                nodes_[v].descendants += delta;
            }
        }

        static void require_boundary(const State<S>& head, const State<S>& tail, const PolyEdge<S>& edge)
        {
            const double scale = std::max({1.0, head.cwiseAbs().maxCoeff(), tail.cwiseAbs().maxCoeff()});
            if ((edge.state(0.0) - head).cwiseAbs().maxCoeff() > 1e-6 * scale ||
                (edge.state(edge.duration) - tail).cwiseAbs().maxCoeff() > 1e-6 * scale)
            {
                throw ConsistencyError("edge does not connect the given states");
            }
        }

        std::vector<TreeNode<S>> nodes_;
        State<S> goal_state_;
        int goal_ = -1;
        SpatialHash hash_;
        Solution<S> best_;
    };

    // ---------------------------------------------------------------------
    // Growth operations

    /// Uniform position over free (inflated-map) cells by rejection, velocity
    /// uniform in a ball, higher derivatives zero. With probability goal_bias the
    /// position is drawn from a ball around the goal instead.
    template <int S, typename Rng>
    State<S> sample_state(const Environment& env, const PlannerConfig<S>& cfg, Rng& rng)
    {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const Eigen::Vector3d lo = env.raw.origin(), ext = env.raw.extent();
        const bool toward_goal = unit(rng) < cfg.goal_bias;

        State<S> x = State<S>::Zero();
        constexpr int kMaxTries = 10000;
        int tries = 0;
        for (;; ++tries)
        {
            if (tries >= kMaxTries)
            {
                throw SamplingError("no free position found after 10000 draws");
            }
            Eigen::Vector3d p;
            if (toward_goal)
            {
                Eigen::Vector3d dir(gauss(rng), gauss(rng), gauss(rng));
                const double nrm = dir.norm();
                dir = nrm > 0.0 ? Eigen::Vector3d(dir / nrm) : Eigen::Vector3d::UnitX();
                p = cfg.goal + dir * cfg.goal_region * std::cbrt(unit(rng));
            }
            else
            {
                p = lo + Eigen::Vector3d(unit(rng), unit(rng), unit(rng)).cwiseProduct(ext);
            }
            if (!env.inflated.occupied_at(p))
            {
                x.row(0) = p.transpose();
                break;
            }
        }
        const double vmax = cfg.sample_speed > 0.0 ? cfg.sample_speed : cfg.velocity_limit();
        Eigen::Vector3d dir(gauss(rng), gauss(rng), gauss(rng));
        const double nrm = dir.norm();
        dir = nrm > 0.0 ? Eigen::Vector3d(dir / nrm) : Eigen::Vector3d::UnitX();
        x.row(1) = (dir * vmax * std::cbrt(unit(rng))).transpose();
        return x;
    }

    struct NearCandidate
    {
        int id = -1;
        double duration = 0.0;
        double cost = 0.0; // edge cost at the optimal duration
    };

    namespace detail
    {
        // Any edge whose cost is within `radius` lasts at most radius / rho seconds,
        // and a dynamically feasible edge cannot travel faster than the velocity limit.
        template <int S>
        double reach_radius(const PlannerConfig<S>& cfg, double cost_radius)
        {
            return cfg.velocity_limit() * (cost_radius / cfg.rho + cfg.check_dt);
        }

        template <int S, typename CostFn>
        std::vector<NearCandidate> near_set(const TrajTree<S>& tree, const Eigen::Vector3d& p, const PlannerConfig<S>& cfg,
                                            double radius, CostFn&& cost_of, bool (*eligible)(const TrajTree<S>&, int))
        {
            std::vector<NearCandidate> out;
            NearCandidate closest;
            closest.cost = std::numeric_limits<double>::infinity();
            auto visit = [&](int id)
            {
                if (!eligible(tree, id))
                {
                    return;
                }
                const DurationResult r = cost_of(id);
                const NearCandidate c{id, r.duration, r.cost};
                if (c.cost <= radius)
                {
                    out.push_back(c);
                }
                else if (c.cost < closest.cost)
                {
                    closest = c;
                }
            };
            if (cfg.exact_near)
            {
                for (int id = 0; id < tree.size(); ++id)
                {
                    visit(id);
                }
            }
            else
            {
                double reach = reach_radius(cfg, radius);
                tree.for_each_near(p, reach, [&](int id)
                                   {
                                       if ((tree.position(id) - p).norm() <= reach)
                                       {
                                           visit(id);
                                       }
                                   });
                // Nothing in cost range: widen the ball until some node is seen and
                // fall back to the cheapest of those.
                const double span = 2.0 * (tree.nodes().empty() ? 1.0 : 1e6);
                while (out.empty() && !std::isfinite(closest.cost) && reach < span)
                {
                    const double inner = reach;
                    reach *= 2.0;
                    tree.for_each_near(p, reach, [&](int id)
                                       {
                                           const double dist = (tree.position(id) - p).norm();
                                           if (dist > inner && dist <= reach)
                                           {
                                               visit(id);
                                           }
                                       });
                }
            }
            if (out.empty() && std::isfinite(closest.cost))
            {
                out.push_back(closest);
            }
            return out;
        }
    } // namespace detail

    /// Nodes that reach x_new within the cost radius; falls back to the single
    /// cheapest node when none does. Unless cfg.exact_near is set, only nodes in
    /// the kinematically reachable ball around x_new are scored.
    template <int S>
    std::vector<NearCandidate> backward_near(const TrajTree<S>& tree, const State<S>& x_new, const PlannerConfig<S>& cfg,
                                             double cost_radius)
    {
        const Eigen::Vector3d p = x_new.row(0).transpose();
        return detail::near_set<S>(
            tree, p, cfg, cost_radius,
            [&](int id) { return optimal_duration<S>(tree.node(id).state, x_new, cfg.rho); },
            [](const TrajTree<S>& t, int id) { return !t.node(id).is_goal; });
    }

    /// Nodes reachable from `from` within the cost radius (roles of head and tail
    /// swapped w.r.t. backward_near). The root is never returned.
    template <int S>
    std::vector<NearCandidate> forward_near(const TrajTree<S>& tree, int from, const PlannerConfig<S>& cfg, double cost_radius)
    {
        const State<S>& x = tree.node(from).state;
        std::vector<NearCandidate> out = detail::near_set<S>(
            tree, tree.position(from), cfg, cost_radius,
            [&](int id) { return optimal_duration<S>(x, tree.node(id).state, cfg.rho); },
            [](const TrajTree<S>&, int id) { return id != TrajTree<S>::start(); });
        // The fallback entry is meaningless for rewiring.
        std::erase_if(out, [&](const NearCandidate& c) { return c.cost > cost_radius || c.id == from; });
        return out;
    }

    template <int S>
    struct ParentChoice
    {
        int parent = -1;
        PolyEdge<S> edge;
    };

    /// Cheapest feasible parent by g(parent) + edge cost. Under the kRRT scheme
    /// only the candidate with the cheapest edge is tried.
    template <int S>
    std::optional<ParentChoice<S>> choose_parent(const TrajTree<S>& tree, std::vector<NearCandidate> candidates,
                                                 const State<S>& x_new, const Environment& env, const PlannerConfig<S>& cfg)
    {
        if (candidates.empty())
        {
            return std::nullopt;
        }
        if (cfg.scheme == GrowthScheme::krrt)
        {
            const auto it = std::min_element(candidates.begin(), candidates.end(),
                                             [](const auto& a, const auto& b) { return a.cost < b.cost; });
            candidates = {*it};
        }
        std::stable_sort(candidates.begin(), candidates.end(), [&](const auto& a, const auto& b)
                         { return tree.node(a.id).g + a.cost < tree.node(b.id).g + b.cost; });
        for (const auto& c : candidates)
        {
            PolyEdge<S> e = solve_edge<S>(tree.node(c.id).state, x_new, c.duration, cfg.rho);
            if (check_edge<S>(e, env, cfg.limits, cfg.check_clearance, cfg.check_dt))
            {
                return ParentChoice<S>{c.id, std::move(e)};
            }
        }
        return std::nullopt;
    }

    /// Connects `id` to the goal at the optimal duration when that is feasible and
    /// improves the goal's cost. Returns true when the goal was (re)connected.
    template <int S>
    bool try_connect_goal(TrajTree<S>& tree, int id, const Environment& env, const PlannerConfig<S>& cfg)
    {
        const auto& n = tree.node(id);
        if (n.is_goal)
        {
            return false;
        }
        const DurationResult r = optimal_duration<S>(n.state, tree.goal_state(), cfg.rho);
        if (tree.goal_connected())
        {
            if (!(n.g + r.cost < tree.node(tree.goal()).g) || tree.node(tree.goal()).parent == id)
            {
                return false;
            }
        }
        PolyEdge<S> e = solve_edge<S>(n.state, tree.goal_state(), r.duration, cfg.rho);
        if (!check_edge<S>(e, env, cfg.limits, cfg.check_clearance, cfg.check_dt))
        {
            return false;
        }
        tree.connect_goal(id, e);
        return true;
    }

    namespace detail
    {
        template <int S>
        bool try_improve(TrajTree<S>& tree, int u, const NearCandidate& c, const Environment& env, const PlannerConfig<S>& cfg)
        {
            const int v = c.id;
            if (v == u || v == TrajTree<S>::start() || tree.node(v).parent == u)
            {
                return false;
            }
            if (!(tree.node(u).g + c.cost < tree.node(v).g - 1e-9))
            {
                return false;
            }
            if (tree.is_ancestor(v, u))
            {
                return false;
            }
            PolyEdge<S> e = solve_edge<S>(tree.node(u).state, tree.node(v).state, c.duration, cfg.rho);
            if (!check_edge<S>(e, env, cfg.limits, cfg.check_clearance, cfg.check_dt))
            {
                return false;
            }
            tree.reparent(v, u, e);
            return true;
        }
    } // namespace detail

    /// One level of rewiring around `id` (kRRT*).
    template <int S>
    int rewire_once(TrajTree<S>& tree, int id, const Environment& env, const PlannerConfig<S>& cfg, double cost_radius)
    {
        int improved = 0;
        for (const auto& c : forward_near(tree, id, cfg, cost_radius))
        {
            improved += detail::try_improve(tree, id, c, env, cfg) ? 1 : 0;
        }
        return improved;
    }

    /// Cascaded rewiring (RRT#-style): nodes are expanded in increasing order of g,
    /// starting from `id`; every node that gets a cheaper parent is queued in turn.
    /// Subtree costs are refreshed on each re-parenting.
    template <int S>
    int rewire_cascade(TrajTree<S>& tree, int id, const Environment& env, const PlannerConfig<S>& cfg, double cost_radius)
    {
        using Entry = std::pair<double, int>;
        std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
        open.emplace(tree.node(id).g, id);
        int improved = 0;
        std::size_t pops = 0;
        while (!open.empty() && pops++ < cfg.rewire_pop_limit)
        {
            const auto [key, u] = open.top();
            open.pop();
            if (key > tree.node(u).g + 1e-12 || tree.node(u).is_goal)
            {
                continue;
            }
            for (const auto& c : forward_near(tree, u, cfg, cost_radius))
            {
                if (detail::try_improve(tree, u, c, env, cfg))
                {
                    ++improved;
                    open.emplace(tree.node(c.id).g, c.id);
                }
            }
        }
        return improved;
    }

    template <int S>
    int descendant_weight(const TrajTree<S>& tree, int id)
    {
        return tree.descendant_weight(id);
    }

} // namespace kdt
