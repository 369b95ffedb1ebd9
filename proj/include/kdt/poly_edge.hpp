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

#include "kdt/detail/poly_tables.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kdt
{

    // Shortest edge duration accepted anywhere in the library. Below this the
    // mapping matrices become badly conditioned.
    inline constexpr double kMinDuration = 0.01;
    inline constexpr double kMaxDuration = 50.0;

    class DomainError : public std::domain_error
    {
    public:
        using std::domain_error::domain_error;
    };

    class OrderError : public std::out_of_range
    {
    public:
        using std::out_of_range::out_of_range;
    };

    /// Flat-output state of one axis: position and its first S-1 derivatives.
    template <int S>
    using AxisState = Eigen::Matrix<double, S, 1>;

    /// Full state, one column per axis (x, y, z), row k holds the k-th derivative.
    template <int S>
    using State = Eigen::Matrix<double, S, 3>;

    /// Head state stacked over tail state, one column per axis.
    template <int S>
    using Boundary = Eigen::Matrix<double, 2 * S, 3>;

    /// Polynomial coefficients on the natural basis, one column per axis.
    template <int S>
    using Coeffs = Eigen::Matrix<double, 2 * S, 3>;

    template <int S>
    using Basis = Eigen::Matrix<double, 2 * S, 1>;

    template <int S>
    using SquareMat = Eigen::Matrix<double, 2 * S, 2 * S>;

    namespace detail
    {
        // j! / (j - k)!, zero when k > j.
        constexpr double falling(int j, int k)
        {
            if (k > j)
            {
                return 0.0;
            }
            double r = 1.0;
            for (int i = 0; i < k; ++i)
            {
                r *= static_cast<double>(j - i);
            }
            return r;
        }

        // Powers T^e for e in [lo, hi], indexed as pw[e - lo].
        template <int Lo, int Hi>
        struct PowerTable
        {
            std::array<double, Hi - Lo + 1> pw;

            explicit PowerTable(double T)
            {
                const double inv = 1.0 / T;
                double p = 1.0;
                for (int e = 0; e >= Lo; --e)
                {
                    if (e <= Hi)
                    {
                        pw[e - Lo] = p;
                    }
                    p *= inv;
                }
                p = T;
                for (int e = 1; e <= Hi; ++e)
                {
                    if (e >= Lo)
                    {
                        pw[e - Lo] = p;
                    }
                    p *= T;
                }
            }

            double operator()(int e) const { return pw[e - Lo]; }
        };

        inline void require_duration(double T)
        {
            if (!(T >= kMinDuration) || !std::isfinite(T))
            {
                throw DomainError("edge duration must be finite and >= " +
                                  std::to_string(kMinDuration) + " s, got " + std::to_string(T));
            }
        }
    } // namespace detail

    /// k-th time derivative of the natural basis (1, t, ..., t^(2S-1)).
    template <int S>
    Basis<S> basis(double t, int k)
    {
        static_assert(S >= 2 && S <= 4, "integrator order must be 2, 3 or 4");
        if (k < 0 || k > 2 * S - 1)
        {
            throw OrderError("basis derivative order " + std::to_string(k) + " out of range");
        }
        if (!(t >= 0.0))
        {
            throw DomainError("basis evaluated at negative time");
        }
        Basis<S> b = Basis<S>::Zero();
        double pw = 1.0;
        for (int j = k; j < 2 * S; ++j)
        {
            b(j) = detail::falling(j, k) * pw;
            pw *= t;
        }
        return b;
    }

    /// Backward map A_b(T): coefficients = A_b(T) * boundary. Closed form,
    /// A_b(T)(j, i) = B(j, i) * T^(i mod S - j) with B the constant unit-time inverse.
    template <int S>
    SquareMat<S> backward_matrix(double T)
    {
        detail::require_duration(T);
        const detail::PowerTable<1 - 2 * S, S - 1> pw(T);
        SquareMat<S> ab;
        for (int j = 0; j < 2 * S; ++j)
        {
            for (int i = 0; i < 2 * S; ++i)
            {
                ab(j, i) = detail::PolyTables<S>::backward[j][i] * pw(i % S - j);
            }
        }
        return ab;
    }

    /// Element-wise time derivative of backward_matrix.
    template <int S>
    SquareMat<S> backward_matrix_dT(double T)
    {
        detail::require_duration(T);
        const detail::PowerTable<-2 * S, S - 2> pw(T);
        SquareMat<S> ab;
        for (int j = 0; j < 2 * S; ++j)
        {
            for (int i = 0; i < 2 * S; ++i)
            {
                const int e = i % S - j;
                ab(j, i) = e == 0 ? 0.0 : detail::PolyTables<S>::backward[j][i] * e * pw(e - 1);
            }
        }
        return ab;
    }

    /// Forward map A_f(T): rows are basis derivatives 0..S-1 at t = 0, then at t = T.
    template <int S>
    SquareMat<S> forward_matrix(double T)
    {
        detail::require_duration(T);
        SquareMat<S> af;
        for (int k = 0; k < S; ++k)
        {
            af.row(k) = basis<S>(0.0, k).transpose();
            af.row(S + k) = basis<S>(T, k).transpose();
        }
        return af;
    }

    template <int S>
    struct MappingMatrices
    {
        SquareMat<S> forward;
        SquareMat<S> backward;

        // Column blocks of A_b acting on the head / tail halves of the boundary vector.
        auto backward_head() const { return backward.template leftCols<S>(); }
        auto backward_tail() const { return backward.template rightCols<S>(); }
    };

    template <int S>
    MappingMatrices<S> mapping_matrices(double T)
    {
        return {forward_matrix<S>(T), backward_matrix<S>(T)};
    }

    /// Q(T) = integral over [0, T] of beta^(S) beta^(S)^T.
    template <int S>
    SquareMat<S> energy_matrix(double T)
    {
        detail::require_duration(T);
        const detail::PowerTable<0, 2 * S> pw(T);
        SquareMat<S> q = SquareMat<S>::Zero();
        for (int i = S; i < 2 * S; ++i)
        {
            for (int j = S; j < 2 * S; ++j)
            {
                const int e = i + j - 2 * S + 1;
                q(i, j) = detail::falling(i, S) * detail::falling(j, S) * pw(e) / e;
            }
        }
        return q;
    }

    template <int S>
    SquareMat<S> energy_matrix_dT(double T)
    {
        detail::require_duration(T);
        const detail::PowerTable<0, 2 * S> pw(T);
        SquareMat<S> q = SquareMat<S>::Zero();
        for (int i = S; i < 2 * S; ++i)
        {
            for (int j = S; j < 2 * S; ++j)
            {
                q(i, j) = detail::falling(i, S) * detail::falling(j, S) * pw(i + j - 2 * S);
            }
        }
        return q;
    }

    /// M(T) = A_b(T)^T Q(T) A_b(T), assembled entry-wise from its closed form.
    template <int S>
    SquareMat<S> boundary_cost_matrix(double T)
    {
        detail::require_duration(T);
        const detail::PowerTable<1 - 2 * S, 0> pw(T);
        SquareMat<S> m;
        for (int i = 0; i < 2 * S; ++i)
        {
            for (int l = 0; l < 2 * S; ++l)
            {
                m(i, l) = detail::PolyTables<S>::energy[i][l] * pw(i % S + l % S + 1 - 2 * S);
            }
        }
        return m;
    }

    template <int S>
    SquareMat<S> boundary_cost_matrix_dT(double T)
    {
        detail::require_duration(T);
        const detail::PowerTable<-2 * S, 0> pw(T);
        SquareMat<S> m;
        for (int i = 0; i < 2 * S; ++i)
        {
            for (int l = 0; l < 2 * S; ++l)
            {
                const int e = i % S + l % S + 1 - 2 * S;
                m(i, l) = detail::PolyTables<S>::energy[i][l] * e * pw(e - 1);
            }
        }
        return m;
    }

    template <int S>
    Boundary<S> boundary(const State<S>& head, const State<S>& tail)
    {
        Boundary<S> d;
        d.template topRows<S>() = head;
        d.template bottomRows<S>() = tail;
        return d;
    }

    /// rho*T + 1/2 sum over columns of c^T Q(T) c. Works for one axis (a 2S vector)
    /// or all three axes at once; the time term is counted once.
    template <typename Derived>
    double edge_cost_c(const Eigen::MatrixBase<Derived>& c, double T, double rho)
    {
        constexpr int S = Derived::RowsAtCompileTime / 2;
        const SquareMat<S> q = energy_matrix<S>(T);
        return rho * T + 0.5 * (c.transpose() * q * c).trace();
    }

    /// rho*T + 1/2 d^T M(T) d, same axis convention as edge_cost_c.
    template <typename Derived>
    double edge_cost_d(const Eigen::MatrixBase<Derived>& d, double T, double rho)
    {
        constexpr int S = Derived::RowsAtCompileTime / 2;
        const SquareMat<S> m = boundary_cost_matrix<S>(T);
        return rho * T + 0.5 * (d.transpose() * m * d).trace();
    }

    /// Partial derivative of edge_cost_c in T with the coefficients held fixed.
    template <typename Derived>
    double edge_cost_c_dT(const Eigen::MatrixBase<Derived>& c, double T, double rho)
    {
        constexpr int S = Derived::RowsAtCompileTime / 2;
        const SquareMat<S> qd = energy_matrix_dT<S>(T);
        return rho + 0.5 * (c.transpose() * qd * c).trace();
    }

    /// Derivative of edge_cost_d in T with the boundary states held fixed, i.e.
    /// the coefficients move with T through A_b(T).
    template <typename Derived>
    double edge_cost_d_dT(const Eigen::MatrixBase<Derived>& d, double T, double rho)
    {
        constexpr int S = Derived::RowsAtCompileTime / 2;
        const SquareMat<S> md = boundary_cost_matrix_dT<S>(T);
        return rho + 0.5 * (d.transpose() * md * d).trace();
    }

    /// One tree edge: a degree 2S-1 polynomial per axis on [0, duration].
    template <int S>
    struct PolyEdge
    {
        EIGEN_MAKE_ALIGNED_OPERATOR_NEW

        Coeffs<S> coeffs = Coeffs<S>::Zero();
        double duration = 0.0;
        double cost = 0.0;

        /// k-th derivative at t, no range checks.
        Eigen::Vector3d eval(double t, int k) const
        {
            Eigen::Vector3d r = Eigen::Vector3d::Zero();
            double pw = 1.0;
            for (int j = k; j < 2 * S; ++j)
            {
                r += (detail::falling(j, k) * pw) * coeffs.row(j).transpose();
                pw *= t;
            }
            return r;
        }

        Eigen::Vector3d position(double t) const { return eval(t, 0); }

        State<S> state(double t) const
        {
            State<S> x;
            for (int k = 0; k < S; ++k)
            {
                x.row(k) = eval(t, k).transpose();
            }
            return x;
        }
    };

    template <int S>
    PolyEdge<S> solve_edge(const State<S>& head, const State<S>& tail, double T, double rho)
    {
        PolyEdge<S> e;
        e.coeffs = backward_matrix<S>(T) * boundary<S>(head, tail);
        e.duration = T;
        e.cost = edge_cost_c(e.coeffs, T, rho);
        return e;
    }

    template <int S>
    Eigen::Vector3d eval_derivative(const PolyEdge<S>& edge, double t, int k)
    {
        if (k < 0 || k > 2 * S - 1)
        {
            throw OrderError("derivative order " + std::to_string(k) + " out of range");
        }
        if (!(t >= 0.0) || t > edge.duration)
        {
            throw DomainError("evaluation time outside the edge");
        }
        return edge.eval(t, k);
    }

    struct DurationResult
    {
        double duration = 0.0;
        double cost = 0.0;
        // Minimizer sits on the search bracket boundary rather than at a stationary point.
        bool at_bound = false;
    };

    namespace detail
    {
        // Total cost of an edge as a function of its duration alone:
        // rho*T + sum_e alpha_e T^-e for e = 1..2S-1.
        template <int S>
        struct DurationProfile
        {
            double rho;
            std::array<double, 2 * S> alpha{};

            double value(double T) const
            {
                const double inv = 1.0 / T;
                double p = inv, v = rho * T;
                for (int e = 1; e < 2 * S; ++e)
                {
                    v += alpha[e] * p;
                    p *= inv;
                }
                return v;
            }

            double slope(double T) const
            {
                const double inv = 1.0 / T;
                double p = inv * inv, v = rho;
                for (int e = 1; e < 2 * S; ++e)
                {
                    v -= e * alpha[e] * p;
                    p *= inv;
                }
                return v;
            }

            double curvature(double T) const
            {
                const double inv = 1.0 / T;
                double p = inv * inv * inv, v = 0.0;
                for (int e = 1; e < 2 * S; ++e)
                {
                    v += e * (e + 1) * alpha[e] * p;
                    p *= inv;
                }
                return v;
            }
        };

        template <int S>
        DurationProfile<S> duration_profile(const State<S>& head, const State<S>& tail, double rho)
        {
            const Boundary<S> d = boundary<S>(head, tail);
            const SquareMat<S> gram = d * d.transpose();
            DurationProfile<S> prof{rho, {}};
            for (int i = 0; i < 2 * S; ++i)
            {
                for (int l = 0; l < 2 * S; ++l)
                {
                    prof.alpha[2 * S - 1 - i % S - l % S] += 0.5 * PolyTables<S>::energy[i][l] * gram(i, l);
                }
            }
            return prof;
        }

        // Root of the slope inside [lo, hi] given slope(lo) < 0 <= slope(hi).
        template <int S>
        double refine_stationary(const DurationProfile<S>& prof, double lo, double hi)
        {
            double t = std::sqrt(lo * hi);
            for (int it = 0; it < 60; ++it)
            {
                const double g = prof.slope(t);
                if (g < 0.0)
                {
                    lo = t;
                }
                else
                {
                    hi = t;
                }
                const double h = prof.curvature(t);
                double next = h > 0.0 ? t - g / h : 0.5 * (lo + hi);
                if (!(next > lo && next < hi))
                {
                    next = 0.5 * (lo + hi);
                }
                if (std::abs(next - t) <= 1e-12 * t || hi - lo <= 1e-12 * hi)
                {
                    return next;
                }
                t = next;
            }
            return t;
        }
    } // namespace detail

    /// Duration minimizing the summed three-axis edge cost over [kMinDuration, kMaxDuration].
    /// The slope is scanned on a log grid, every sign change from negative to
    /// positive is refined, and the best stationary point or bracket end wins.
    template <int S>
    DurationResult optimal_duration(const State<S>& head, const State<S>& tail, double rho)
    {
        constexpr int kGrid = 32;
        const auto prof = detail::duration_profile<S>(head, tail, rho);
        const double ratio = std::pow(kMaxDuration / kMinDuration, 1.0 / (kGrid - 1));

        DurationResult best{kMinDuration, prof.value(kMinDuration), true};
        const double upper = prof.value(kMaxDuration);
        if (upper < best.cost)
        {
            best = {kMaxDuration, upper, true};
        }

        double t0 = kMinDuration;
        double g0 = prof.slope(t0);
        for (int i = 1; i < kGrid; ++i)
        {
            const double t1 = i == kGrid - 1 ? kMaxDuration : t0 * ratio;
            const double g1 = prof.slope(t1);
            if (g0 < 0.0 && g1 >= 0.0)
            {
                const double ts = detail::refine_stationary(prof, t0, t1);
                const double v = prof.value(ts);
                if (v < best.cost)
                {
                    best = {ts, v, false};
                }
            }
            t0 = t1;
            g0 = g1;
        }
        return best;
    }

    /// Edge cost at the optimal duration together with the solved edge.
    template <int S>
    PolyEdge<S> solve_optimal_edge(const State<S>& head, const State<S>& tail, double rho)
    {
        const DurationResult r = optimal_duration<S>(head, tail, rho);
        return solve_edge<S>(head, tail, r.duration, rho);
    }

} // namespace kdt
