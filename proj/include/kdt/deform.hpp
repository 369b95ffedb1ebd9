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
#include "kdt/nsopt.hpp"
#include "kdt/poly_edge.hpp"
#include "kdt/traj_tree.hpp"

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <optional>
#include <vector>

namespace kdt
{

    /// Penalty integral of one edge, trapezoidal over k + 1 samples:
    /// (T/k) sum_j w_j sum_m X_m max(G_m(t_j), 0) with G_0 = r - F(p) and
    /// G_k = |p^(k)|^2 - m_k^2. Optionally accumulates the gradient w.r.t. the
    /// coefficients (gc) and w.r.t. T with the coefficients held fixed (gT).
    template <int S>
    double edge_penalty(const Coeffs<S>& c, double T, int k, const DistanceField& field,
                        const PenaltyConfig<S>& pen, const Eigen::Matrix<double, S, 1>& limits,
                        Coeffs<S>* gc = nullptr, double* gT = nullptr)
    {
        detail::require_duration(T);
        if (k < 1)
        {
            throw std::invalid_argument("penalty needs at least one sample interval");
        }
        const double h = T / k;
        double total = 0.0;       // sum_j w_j sum_m X_m max(G, 0)
        double dt_sum = 0.0;      // sum_j w_j sum_m X_m dG/dt * (j / k)
        std::array<double, 2 * S + 1> pw;
        std::array<Eigen::Vector3d, S + 2> der;
        for (int j = 0; j <= k; ++j)
        {
            const double t = j * h;
            const double wj = (j == 0 || j == k) ? 0.5 : 1.0;
            pw[0] = 1.0;
            for (int e = 1; e <= 2 * S; ++e)
            {
                pw[e] = pw[e - 1] * t;
            }
            for (int m = 0; m <= S + 1; ++m)
            {
                der[m].setZero();
                for (int i = m; i < 2 * S; ++i)
                {
                    der[m] += (detail::falling(i, m) * pw[i - m]) * c.row(i).transpose();
                }
            }

            // Obstacle term.
            if (pen.weights[0] > 0.0)
            {
                const FieldSample fs = field.query(der[0]);
                const double gval = pen.clearance - fs.value;
                if (gval > 0.0)
                {
                    const double a = wj * pen.weights[0];
                    total += a * gval;
                    // dG/dp = -grad F
                    dt_sum += a * (-fs.gradient.dot(der[1])) * j / k;
                    if (gc)
                    {
                        for (int i = 0; i < 2 * S; ++i)
                        {
                            gc->row(i) -= (h * a * pw[i]) * fs.gradient.transpose();
                        }
                    }
                }
            }
            // Derivative limits.
            for (int m = 1; m <= S; ++m)
            {
                if (!(pen.weights[m] > 0.0))
                {
                    continue;
                }
                const double gval = der[m].squaredNorm() - limits[m - 1] * limits[m - 1];
                if (gval > 0.0)
                {
                    const double a = wj * pen.weights[m];
                    total += a * gval;
                    dt_sum += a * 2.0 * der[m].dot(der[m + 1]) * j / k;
                    if (gc)
                    {
                        for (int i = m; i < 2 * S; ++i)
                        {
                            gc->row(i) += (h * a * 2.0 * detail::falling(i, m) * pw[i - m]) * der[m].transpose();
                        }
                    }
                }
            }
        }
        if (gT)
        {
            *gT += total / k + h * dt_sum;
        }
        return h * total;
    }

    /// Number of penalty sample intervals for a duration.
    inline int penalty_samples(double T, double spacing)
    {
        return std::max(1, static_cast<int>(std::ceil(T / spacing - 1e-9)));
    }

    /// One deformation unit: the state of node n, the edge into n and the edges
    /// to its children. Everything but the decision variables is frozen when the
    /// unit is built, including the subtree weights and penalty sample counts.
    template <int S>
    class DeformationUnit
    {
    public:
        EIGEN_MAKE_ALIGNED_OPERATOR_NEW

        DeformationUnit(const TrajTree<S>& tree, int n, DeformMode mode, double spacing)
            : node_(n), mode_(mode)
        {
            const auto& nd = tree.node(n);
            if (n == TrajTree<S>::start() || nd.children.empty() || nd.is_goal)
            {
                throw std::invalid_argument("deformation unit needs a non-start, non-leaf node");
            }
            parent_state_ = tree.node(nd.parent).state;
            state_ = nd.state;
            durations_.push_back(nd.edge.duration);
            weights_.push_back(tree.descendant_weight(n));
            for (int c : nd.children)
            {
                const auto& cn = tree.node(c);
                children_.push_back(c);
                child_states_.push_back(cn.state);
                durations_.push_back(cn.edge.duration);
                weights_.push_back(tree.descendant_weight(c));
            }
            for (double T : durations_)
            {
                samples_.push_back(penalty_samples(T, spacing));
            }
        }

        int node() const { return node_; }
        DeformMode mode() const { return mode_; }
        int edge_count() const { return static_cast<int>(durations_.size()); }
        const std::vector<int>& children() const { return children_; }
        const std::vector<double>& weights() const { return weights_; }
        const std::vector<int>& samples() const { return samples_; }
        const std::vector<double>& initial_durations() const { return durations_; }

        int dimension() const
        {
            return 3 * S + (mode_ == DeformMode::spatio_temporal ? edge_count() : 0);
        }

        /// Layout: x_n column-major (entry a*S + k is derivative k on axis a), then
        /// the durations (edge into n first, children in order) in spatio-temporal mode.
        Eigen::VectorXd initial_point() const
        {
            Eigen::VectorXd z(dimension());
            z.head(3 * S) = Eigen::Map<const Eigen::VectorXd>(state_.data(), 3 * S);
            if (mode_ == DeformMode::spatio_temporal)
            {
                for (int i = 0; i < edge_count(); ++i)
                {
                    z[3 * S + i] = durations_[i];
                }
            }
            return z;
        }

        Eigen::VectorXd lower_bounds() const
        {
            Eigen::VectorXd lo = Eigen::VectorXd::Constant(dimension(), -std::numeric_limits<double>::infinity());
            lo.tail(dimension() - 3 * S).setConstant(kMinDuration);
            return lo;
        }

        State<S> state_of(const Eigen::VectorXd& z) const
        {
            State<S> x;
            Eigen::Map<Eigen::VectorXd>(x.data(), 3 * S) = z.head(3 * S);
            return x;
        }

        double duration_of(const Eigen::VectorXd& z, int i) const
        {
            return mode_ == DeformMode::spatio_temporal ? z[3 * S + i] : durations_[i];
        }

        /// Edges for a decision vector: edge into n first, then one per child.
        std::vector<PolyEdge<S>> edges(const Eigen::VectorXd& z, double rho) const
        {
            const State<S> x = state_of(z);
            std::vector<PolyEdge<S>> out;
            out.reserve(durations_.size());
            out.push_back(solve_edge<S>(parent_state_, x, duration_of(z, 0), rho));
            for (std::size_t i = 0; i < children_.size(); ++i)
            {
                out.push_back(solve_edge<S>(x, child_states_[i], duration_of(z, static_cast<int>(i) + 1), rho));
            }
            return out;
        }

        /// sum_i d_i J_s(c_i, T_i): the part of the tree cost this unit controls.
        double smooth_cost(const Eigen::VectorXd& z, double rho) const
        {
            double s = 0.0;
            const auto es = edges(z, rho);
            for (std::size_t i = 0; i < es.size(); ++i)
            {
                s += weights_[i] * es[i].cost;
            }
            return s;
        }

        /// Weighted smooth cost plus penalties; writes the gradient when `grad` is given.
        double objective(const Eigen::VectorXd& z, const DistanceField& field, const PenaltyConfig<S>& pen,
                         const Eigen::Matrix<double, S, 1>& limits, double rho, Eigen::VectorXd* grad = nullptr) const
        {
            const State<S> x = state_of(z);
            if (grad)
            {
                grad->setZero(dimension());
            }
            double total = 0.0;
            Eigen::Matrix<double, S, 3> gx = Eigen::Matrix<double, S, 3>::Zero();
            for (int i = 0; i < edge_count(); ++i)
            {
                const double T = duration_of(z, i);
                const SquareMat<S> ab = backward_matrix<S>(T);
                const Boundary<S> d = i == 0 ? boundary<S>(parent_state_, x) : boundary<S>(x, child_states_[i - 1]);
                const Coeffs<S> c = ab * d;
                const SquareMat<S> q = energy_matrix<S>(T);

                Coeffs<S> gc = q * c;
                double gT = 0.0;
                const double js = rho * T + 0.5 * (c.transpose() * q * c).trace();
                const double jf = edge_penalty<S>(c, T, samples_[i], field, pen, limits,
                                                  grad ? &gc : nullptr, grad ? &gT : nullptr);
                total += weights_[i] * (js + jf);
                if (!grad)
                {
                    continue;
                }
                // x_n is the tail of the edge into n and the head of every child edge.
                if (i == 0)
                {
                    gx += weights_[i] * (ab.template rightCols<S>().transpose() * gc);
                }
                else
                {
                    gx += weights_[i] * (ab.template leftCols<S>().transpose() * gc);
                }
                if (mode_ == DeformMode::spatio_temporal)
                {
                    const SquareMat<S> qd = energy_matrix_dT<S>(T);
                    const SquareMat<S> abd = backward_matrix_dT<S>(T);
                    gT += rho + 0.5 * (c.transpose() * qd * c).trace();
                    gT += (gc.transpose() * (abd * d)).trace();
                    (*grad)[3 * S + i] = weights_[i] * gT;
                }
            }
            if (grad)
            {
                grad->head(3 * S) = Eigen::Map<const Eigen::VectorXd>(gx.data(), 3 * S);
            }
            return total;
        }

    private:
        int node_;
        DeformMode mode_;
        State<S> parent_state_;
        State<S> state_;
        std::vector<int> children_;
        std::vector<State<S>> child_states_;
        std::vector<double> durations_;
        std::vector<double> weights_;
        std::vector<int> samples_;
    };

    enum class DeformVerdict
    {
        accepted,
        reverted,
        skipped,
    };

    struct DeformOutcome
    {
        DeformVerdict verdict = DeformVerdict::skipped;
        double objective_before = 0.0;
        double objective_after = 0.0;
        double smooth_before = 0.0;
        double smooth_after = 0.0;
        int evaluations = 0;
    };

    template <int S>
    bool deformable(const TrajTree<S>& tree, int id)
    {
        if (id <= TrajTree<S>::start() || id >= tree.size())
        {
            return false;
        }
        const auto& n = tree.node(id);
        return !n.is_goal && !n.children.empty();
    }

    /// Optimizes one unit and commits it only if every edge passes the hard
    /// check, the unit objective drops by at least 1e-9 and the weighted smooth
    /// cost does not rise. Otherwise the tree is left untouched.
    template <int S>
    DeformOutcome deform_unit(TrajTree<S>& tree, int n, const Environment& env, const PlannerConfig<S>& cfg)
    {
        DeformOutcome out;
        if (!deformable(tree, n))
        {
            return out;
        }
        const DeformationUnit<S> unit(tree, n, cfg.mode, cfg.penalty.spacing);
        nsopt::Problem pb;
        pb.evaluate = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g)
        { return unit.objective(z, env.field, cfg.penalty, cfg.limits, cfg.rho, &g); };
        pb.initial = unit.initial_point();
        pb.lower = unit.lower_bounds();
        pb.max_iterations = cfg.nsopt_iterations;
        pb.max_evaluations = cfg.nsopt_evaluations;
        pb.tolerance = cfg.nsopt_tolerance;
        pb.memory = cfg.nsopt_memory;

        out.verdict = DeformVerdict::reverted;
        nsopt::Result res;
        try
        {
            res = nsopt::minimize(pb);
        }
        catch (const std::exception&)
        {
            return out;
        }
        out.evaluations = res.evaluations;
        out.objective_before = res.initial_value;
        out.objective_after = res.value;
        out.smooth_before = unit.smooth_cost(pb.initial, cfg.rho);
        if (!(res.value <= res.initial_value - 1e-9) || !res.point.allFinite())
        {
            return out;
        }
        out.smooth_after = unit.smooth_cost(res.point, cfg.rho);
        if (out.smooth_after > out.smooth_before)
        {
            return out;
        }
        auto es = unit.edges(res.point, cfg.rho);
        for (const auto& e : es)
        {
            if (!check_edge<S>(e, env, cfg.limits, cfg.check_clearance, cfg.check_dt))
            {
                return out;
            }
        }
        const PolyEdge<S> in_edge = es.front();
        es.erase(es.begin());
        tree.commit_unit(n, unit.state_of(res.point), in_edge, es);
        out.verdict = DeformVerdict::accepted;
        return out;
    }

    /// Node ids to deform after a new node was attached under `n`.
    template <int S>
    std::vector<int> select_units(const TrajTree<S>& tree, int n, DeformVariant variant)
    {
        std::vector<int> out;
        auto bfs_from = [&](int root)
        {
            std::vector<int> queue{root};
            for (std::size_t i = 0; i < queue.size(); ++i)
            {
                const int v = queue[i];
                if (deformable(tree, v))
                {
                    out.push_back(v);
                }
                for (int c : tree.node(v).children)
                {
                    queue.push_back(c);
                }
            }
        };
        switch (variant)
        {
        case DeformVariant::off:
            break;
        case DeformVariant::node:
            if (deformable(tree, n))
            {
                out.push_back(n);
            }
            break;
        case DeformVariant::trunk:
            for (int v = n; v > TrajTree<S>::start(); v = tree.node(v).parent)
            {
                if (deformable(tree, v))
                {
                    out.push_back(v);
                }
            }
            std::reverse(out.begin(), out.end());
            break;
        case DeformVariant::branch:
            bfs_from(n);
            break;
        case DeformVariant::tree:
            bfs_from(TrajTree<S>::start());
            break;
        }
        return out;
    }

    /// Runs deform_unit over the list in order; stops early once `deadline` passes.
    template <int S>
    int deform_in_order(TrajTree<S>& tree, const std::vector<int>& units, const Environment& env,
                        const PlannerConfig<S>& cfg,
                        std::optional<std::chrono::steady_clock::time_point> deadline = std::nullopt)
    {
        int accepted = 0;
        for (int id : units)
        {
            if (deadline && std::chrono::steady_clock::now() >= *deadline)
            {
                break;
            }
            if (!deformable(tree, id))
            {
                continue;
            }
            accepted += deform_unit(tree, id, env, cfg).verdict == DeformVerdict::accepted ? 1 : 0;
        }
        return accepted;
    }

} // namespace kdt
