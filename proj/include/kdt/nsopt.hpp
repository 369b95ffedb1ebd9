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

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <stdexcept>

namespace kdt::nsopt
{

    /// Returns f(x) and writes one subgradient into `g` (already sized).
    using Evaluator = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& g)>;

    struct Problem
    {
        Evaluator evaluate;
        Eigen::VectorXd initial;
        // Per-coordinate lower bounds; -inf for free coordinates. Empty means unbounded.
        Eigen::VectorXd lower;
        int max_iterations = 50;
        int max_evaluations = 200;
        double tolerance = 1e-5;
        int memory = 7;
    };

    enum class Termination
    {
        tolerance,
        budget,
        line_search_failure,
    };

    struct Result
    {
        Eigen::VectorXd point;
        double value = 0.0;
        double initial_value = 0.0;
        int evaluations = 0;
        int iterations = 0;
        int serious_steps = 0;
        int null_steps = 0;
        Termination reason = Termination::budget;
    };

    namespace detail
    {
        // Limited-memory inverse Hessian approximation built from serious steps.
        class InverseHessian
        {
        public:
            explicit InverseHessian(int memory) : memory_(memory) {}

            void set_initial_scale(double h0) { h0_ = h0; }

            bool update(const Eigen::VectorXd& s, const Eigen::VectorXd& u)
            {
                const double su = s.dot(u);
                if (!(su > 1e-12 * s.norm() * u.norm()) || !std::isfinite(su))
                {
                    return false;
                }
                if (static_cast<int>(s_.size()) == memory_)
                {
                    s_.pop_front();
                    u_.pop_front();
                    rho_.pop_front();
                }
                s_.push_back(s);
                u_.push_back(u);
                rho_.push_back(1.0 / su);
                h0_ = su / u.squaredNorm();
                return true;
            }

            Eigen::VectorXd apply(const Eigen::VectorXd& v) const
            {
                const int m = static_cast<int>(s_.size());
                Eigen::VectorXd q = v;
                std::vector<double> a(m);
                for (int i = m - 1; i >= 0; --i)
                {
                    a[i] = rho_[i] * s_[i].dot(q);
                    q -= a[i] * u_[i];
                }
                q *= h0_;
                for (int i = 0; i < m; ++i)
                {
                    const double b = rho_[i] * u_[i].dot(q);
                    q += (a[i] - b) * s_[i];
                }
                return q;
            }

        private:
            int memory_;
            double h0_ = 1.0;
            std::deque<Eigen::VectorXd> s_, u_;
            std::deque<double> rho_;
        };

        // Minimizes lambda^T A lambda + 2 b^T lambda over the 3-simplex by
        // enumerating vertices, edges and the interior.
        inline Eigen::Vector3d simplex_qp(const Eigen::Matrix3d& A, const Eigen::Vector3d& b)
        {
            auto phi = [&](const Eigen::Vector3d& l) { return l.dot(A * l) + 2.0 * b.dot(l); };
            Eigen::Vector3d best = Eigen::Vector3d::UnitX();
            double best_v = phi(best);
            auto consider = [&](const Eigen::Vector3d& l)
            {
                if ((l.array() >= -1e-14).all())
                {
                    const Eigen::Vector3d c = l.cwiseMax(0.0) / l.cwiseMax(0.0).sum();
                    const double v = phi(c);
                    if (v < best_v)
                    {
                        best_v = v;
                        best = c;
                    }
                }
            };
            for (int i = 0; i < 3; ++i)
            {
                consider(Eigen::Vector3d::Unit(i));
            }
            // Edges: l = e_i + t (e_j - e_i).
            for (int i = 0; i < 3; ++i)
            {
                for (int j = i + 1; j < 3; ++j)
                {
                    const Eigen::Vector3d ei = Eigen::Vector3d::Unit(i), dir = Eigen::Vector3d::Unit(j) - ei;
                    const double qa = dir.dot(A * dir);
                    const double qb = dir.dot(A * ei) + b.dot(dir);
                    if (qa > 0.0)
                    {
                        const double t = std::clamp(-qb / qa, 0.0, 1.0);
                        consider(ei + t * dir);
                    }
                }
            }
            // Interior: KKT system with the sum constraint.
            Eigen::Matrix4d K = Eigen::Matrix4d::Zero();
            K.topLeftCorner<3, 3>() = 2.0 * A;
            K.block<3, 1>(0, 3).setOnes();
            K.block<1, 3>(3, 0).setOnes();
            Eigen::Vector4d rhs;
            rhs << -2.0 * b, 1.0;
            Eigen::Vector4d sol = K.fullPivLu().solve(rhs);
            if (sol.allFinite())
            {
                consider(sol.head<3>());
            }
            return best;
        }
    } // namespace detail

    /// Limited-memory bundle method. Serious steps update an L-BFGS style
    /// inverse Hessian; null steps aggregate the current, trial and previously
    /// aggregated subgradients. Coordinates with finite lower bounds are projected
    /// after every trial step and frozen while active.
    inline Result minimize(const Problem& pb)
    {
        const Eigen::Index n = pb.initial.size();
        if (n < 1)
        {
            throw std::invalid_argument("nsopt problem dimension must be >= 1");
        }
        const Eigen::VectorXd lower = pb.lower.size() == n
                                          ? pb.lower
                                          : Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
        if ((pb.initial.array() < lower.array()).any())
        {
            throw std::invalid_argument("nsopt initial point violates bounds");
        }

        constexpr double kArmijo = 1e-4;    // serious step descent fraction
        constexpr double kNullGain = 0.25;  // null step model-change fraction
        constexpr double kLocality = 0.5;   // distance measure weight
        constexpr int kMaxTrials = 20;
        constexpr int kMaxConsecutiveNull = 15;

        Result res;
        auto project = [&](Eigen::VectorXd& x) { x = x.cwiseMax(lower); };
        auto active = [&](const Eigen::VectorXd& x, Eigen::Index i)
        { return std::isfinite(lower[i]) && x[i] <= lower[i] + 1e-12; };

        Eigen::VectorXd x = pb.initial;
        Eigen::VectorXd gx(n);
        double fx = pb.evaluate(x, gx);
        ++res.evaluations;
        res.point = x;
        res.value = fx;
        res.initial_value = fx;
        if (!std::isfinite(fx) || !gx.allFinite())
        {
            res.reason = Termination::line_search_failure;
            return res;
        }

        detail::InverseHessian hess(pb.memory);
        hess.set_initial_scale(1.0 / std::max(1.0, gx.norm()));

        Eigen::VectorXd agg = gx; // aggregated subgradient
        double agg_beta = 0.0;    // its linearization error
        int consecutive_null = 0;
        Eigen::VectorXd y(n), gy(n);

        for (res.iterations = 0; res.iterations < pb.max_iterations; ++res.iterations)
        {
            // Direction from the aggregated subgradient, frozen on active bounds.
            Eigen::VectorXd d = -hess.apply(agg);
            for (Eigen::Index i = 0; i < n; ++i)
            {
                if (active(x, i) && d[i] < 0.0)
                {
                    d[i] = 0.0;
                }
            }
            double w = -agg.dot(d) + 2.0 * agg_beta;
            if (!(w > 0.0) || !d.allFinite())
            {
                // Model lost descent; restart from the plain subgradient.
                d = -gx / std::max(1.0, gx.norm());
                for (Eigen::Index i = 0; i < n; ++i)
                {
                    if (active(x, i) && d[i] < 0.0)
                    {
                        d[i] = 0.0;
                    }
                }
                agg = gx;
                agg_beta = 0.0;
                w = -gx.dot(d);
            }
            if (w <= pb.tolerance || d.squaredNorm() == 0.0)
            {
                res.reason = Termination::tolerance;
                return res;
            }

            double t = 1.0;
            bool serious = false, null_step = false;
            double fy = 0.0, beta_y = 0.0;
            for (int trial = 0; trial < kMaxTrials; ++trial)
            {
                if (res.evaluations >= pb.max_evaluations)
                {
                    res.reason = Termination::budget;
                    return res;
                }
                y = x + t * d;
                project(y);
                const Eigen::VectorXd step = y - x;
                if (step.squaredNorm() == 0.0)
                {
                    break;
                }
                fy = pb.evaluate(y, gy);
                ++res.evaluations;
                if (!std::isfinite(fy) || !gy.allFinite())
                {
                    res.reason = Termination::line_search_failure;
                    return res;
                }
                if (fy < res.value)
                {
                    res.value = fy;
                    res.point = y;
                }
                if (fy <= fx - kArmijo * t * w)
                {
                    serious = true;
                    break;
                }
                const double slope = step.dot(gy);
                beta_y = std::max(std::abs(fx - fy + slope), kLocality * step.squaredNorm());
                if (trial > 0 && -beta_y + slope / t >= -kNullGain * w)
                {
                    null_step = true;
                    break;
                }
                // Safeguarded quadratic interpolation of the step.
                const double dphi0 = -w;
                const double denom = 2.0 * (fy - fx - dphi0 * t);
                double tn = denom > 0.0 ? -dphi0 * t * t / denom : 0.5 * t;
                t = std::clamp(tn, 0.1 * t, 0.5 * t);
            }

            if (serious)
            {
                ++res.serious_steps;
                consecutive_null = 0;
                hess.update(y - x, gy - gx);
                x = y;
                fx = fy;
                gx = gy;
                agg = gx;
                agg_beta = 0.0;
            }
            else if (null_step)
            {
                ++res.null_steps;
                if (++consecutive_null > kMaxConsecutiveNull)
                {
                    res.reason = Termination::line_search_failure;
                    return res;
                }
                const Eigen::VectorXd hgx = hess.apply(gx), hgy = hess.apply(gy), hagg = hess.apply(agg);
                Eigen::Matrix3d A;
                A << gx.dot(hgx), gx.dot(hgy), gx.dot(hagg),
                    gy.dot(hgx), gy.dot(hgy), gy.dot(hagg),
                    agg.dot(hgx), agg.dot(hgy), agg.dot(hagg);
                A = 0.5 * (A + A.transpose()).eval();
                const Eigen::Vector3d b(0.0, beta_y, agg_beta);
                const Eigen::Vector3d lam = detail::simplex_qp(A, b);
                agg = lam[0] * gx + lam[1] * gy + lam[2] * agg;
                agg_beta = lam[1] * beta_y + lam[2] * agg_beta;
            }
            else
            {
                res.reason = Termination::line_search_failure;
                return res;
            }
        }
        res.reason = Termination::budget;
        return res;
    }

    /// Largest central-difference disagreement over coordinates, normalized by
    /// the infinity norm of the analytic gradient.
    inline double check_gradient(const Evaluator& f, const Eigen::VectorXd& x, double h)
    {
        if (!(h > 0.0))
        {
            throw std::domain_error("finite-difference step must be positive");
        }
        const Eigen::Index n = x.size();
        Eigen::VectorXd g(n), scratch(n);
        f(x, g);
        double worst = 0.0;
        Eigen::VectorXd xp = x, xm = x;
        for (Eigen::Index i = 0; i < n; ++i)
        {
            xp[i] = x[i] + h;
            xm[i] = x[i] - h;
            const double fd = (f(xp, scratch) - f(xm, scratch)) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - g[i]));
            xp[i] = x[i];
            xm[i] = x[i];
        }
        return worst / std::max(g.lpNorm<Eigen::Infinity>(), 1e-300);
    }

} // namespace kdt::nsopt
