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

// Acceptance runner: one PASS/FAIL line per criterion, exit code 1 if any fails.
//
//   kdt_acceptance [--trials N] [--only 1,5,...] [--threads N]
//
// The defaults are the full protocol; --trials and --only exist for quick local runs.

#include "kdt/bench.hpp"
#include "kdt/planner.hpp"
#include "support.hpp"

#include <CLI11.hpp>
#include <Eigen/LU>

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>

namespace
{

    namespace kt = kdt::testing;
    namespace kb = kdt::bench;
    using Clock = std::chrono::steady_clock;

    double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

    struct Options
    {
        int trials = 50;
        int threads = 1;
        std::set<int> only;
    };

    struct Verdict
    {
        bool pass = true;
        std::string detail;
    };

    void fail_if(Verdict& v, bool bad, const std::string& what)
    {
        if (bad)
        {
            v.pass = false;
            v.detail += (v.detail.empty() ? "" : "; ") + what;
        }
    }

    std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0)
    {
        char buf[256];
        std::snprintf(buf, sizeof(buf), f, a, b, c, d);
        return buf;
    }

    // ------------------------------------------------------------------
    // 1. Edge math

    template <int S>
    void edge_math_order(Verdict& v, double& worst_id, double& worst_bij, double& worst_dT)
    {
        std::mt19937_64 rng(1000 + S);
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        auto random_state = [&]
        {
            kdt::State<S> x;
            for (int i = 0; i < x.size(); ++i)
            {
                x.data()[i] = u(rng);
            }
            return x;
        };
        for (double T : {0.05, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0})
        {
            const auto m = kdt::mapping_matrices<S>(T);
            const kdt::SquareMat<S> scale = m.forward.cwiseAbs() * m.backward.cwiseAbs();
            const kdt::SquareMat<S> err = (m.forward * m.backward - kdt::SquareMat<S>::Identity()).cwiseAbs();
            worst_id = std::max(worst_id, err.cwiseQuotient(scale).maxCoeff());
        }
        for (int trial = 0; trial < 200; ++trial)
        {
            const auto d = kdt::boundary<S>(random_state(), random_state());
            const double T = 0.1 + 0.05 * trial;
            const kdt::Coeffs<S> c = kdt::backward_matrix<S>(T) * d;
            const double jd = kdt::edge_cost_d(d, T, 100.0);
            worst_bij = std::max(worst_bij, std::abs(kdt::edge_cost_c(c, T, 100.0) - jd) / std::abs(jd));

            const double h = 1e-6 * T;
            const double fd = (kdt::edge_cost_d(d, T + h, 100.0) - kdt::edge_cost_d(d, T - h, 100.0)) / (2 * h);
            const double an = kdt::edge_cost_d_dT(d, T, 100.0);
            worst_dT = std::max(worst_dT, std::abs(fd - an) / std::max(1.0, std::abs(an)));
        }
        (void)v;
    }

    Verdict criterion_edge_math()
    {
        const auto t0 = Clock::now();
        Verdict v;
        double id = 0, bij = 0, dT = 0;
        edge_math_order<2>(v, id, bij, dT);
        edge_math_order<3>(v, id, bij, dT);
        edge_math_order<4>(v, id, bij, dT);

        kdt::State<3> a = kdt::State<3>::Zero(), b = kdt::State<3>::Zero();
        b(0, 0) = 1.0;
        const auto e = kdt::solve_edge<3>(a, b, 1.0, 100.0);
        const double quad = 100.0 * e.duration + 0.5 * kt::control_energy_quadrature(e, 400);
        const double secs = since(t0);

        fail_if(v, id >= 1e-9, fmt("A_f A_b - I %.2e", id));
        fail_if(v, bij >= 1e-9, fmt("bijection %.2e", bij));
        fail_if(v, std::abs(e.cost - 460.0) > 1e-9 * 460.0, fmt("min-jerk cost %.12g", e.cost));
        fail_if(v, std::abs(quad - 460.0) > 1e-9 * 460.0, fmt("quadrature %.12g", quad));
        fail_if(v, dT >= 1e-5, fmt("dJ/dT %.2e", dT));
        fail_if(v, secs >= 5.0, fmt("runtime %.1f s", secs));
        if (v.pass)
        {
            v.detail = fmt("identity %.1e, bijection %.1e, min-jerk %.10g (quadrature %.10g)", id, bij, e.cost, quad) +
                       fmt(", dJ/dT %.1e, %.2f s", dT, secs);
        }
        return v;
    }

    // ------------------------------------------------------------------
    // 2. Unit gradient

    Verdict criterion_gradient()
    {
        const auto t0 = Clock::now();
        Verdict v;
        std::mt19937_64 rng(4242);
        const Eigen::Vector3d lo(2, 2, 1), hi(18, 18, 5);
        double worst = 0.0;
        int checked = 0, skipped = 0;
        for (int map = 0; map < 10; ++map)
        {
            const auto env = kt::cluttered_environment(700 + map, 30);
            kdt::PlannerConfig<3> cfg;
            cfg.limits = Eigen::Vector3d(2.0, 3.0, 6.0);
            for (int found = 0; found < 10;)
            {
                const int kids = 1 + static_cast<int>(rng() % 3);
                kdt::TrajTree<3> tree(kt::random_state<3>(rng, lo, hi), cfg.rest_state(hi), Eigen::Vector3d::Zero(),
                                      Eigen::Vector3d(20, 20, 6));
                const auto n = kt::random_state<3>(rng, lo, hi);
                tree.insert(0, n, kdt::solve_optimal_edge<3>(tree.node(0).state, n, cfg.rho));
                for (int c = 0; c < kids; ++c)
                {
                    const auto x = kt::random_state<3>(rng, lo, hi);
                    tree.insert(1, x, kdt::solve_optimal_edge<3>(n, x, cfg.rho));
                }
                const kdt::DeformationUnit<3> unit(tree, 1, kdt::DeformMode::spatio_temporal, cfg.penalty.spacing);
                const kdt::nsopt::Evaluator f = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g)
                { return unit.objective(z, env.field, cfg.penalty, cfg.limits, cfg.rho, &g); };
                const Eigen::VectorXd z = unit.initial_point();
                // A kink of the penalty inside the stencil shows up as step-size dependence.
                const double e1 = kdt::nsopt::check_gradient(f, z, 1e-6);
                const double e2 = kdt::nsopt::check_gradient(f, z, 2e-6);
                if (std::abs(e1 - e2) > 1e-5)
                {
                    ++skipped;
                    continue;
                }
                worst = std::max(worst, e1);
                ++checked;
                ++found;
            }
        }
        const double secs = since(t0);
        fail_if(v, worst >= 1e-4, fmt("max relative error %.2e", worst));
        fail_if(v, secs >= 30.0, fmt("runtime %.1f s", secs));
        v.detail = (v.pass ? "" : v.detail + "; ") +
                   fmt("%g configurations on 10 maps (%g skipped as non-smooth), max relative error %.2e, %.1f s", checked,
                       skipped, worst, secs);
        return v;
    }

    // ------------------------------------------------------------------
    // 3. Oracle equivalence

    Verdict criterion_oracles()
    {
        Verdict v;

        // Distance transform.
        int edt_bad = 0;
        for (std::uint64_t seed = 0; seed < 100; ++seed)
        {
            const auto g = kt::random_grid(seed, 16, 0.001 + 0.002 * (seed % 10));
            if (g.count_occupied() == 0)
            {
                continue;
            }
            const auto field = kdt::build_distance_field(g);
            const auto oracle = kt::brute_force_distance(g);
            for (std::size_t i = 0; i < oracle.size(); ++i)
            {
                if (field.values()[i] != oracle[i])
                {
                    ++edt_bad;
                    break;
                }
            }
        }
        fail_if(v, edt_bad > 0, fmt("EDT differs on %g grids", edt_bad));

        // Penalty: edges between sampler states on cluttered maps, at the sample
        // count the planner uses (never below 50).
        int pen_total = 0, pen_bad = 0;
        double pen_worst = 0.0;
        std::vector<double> pen_errs;
        for (int map = 0; map < 10; ++map)
        {
            const auto env = kt::cluttered_environment(11 + map, 40);
            kdt::PlannerConfig<3> cfg;
            cfg.start = Eigen::Vector3d(1, 1, 1);
            cfg.goal = Eigen::Vector3d(19, 19, 5);
            std::mt19937_64 rng(6 + map);
            for (int trial = 0; trial < 40; ++trial)
            {
                const auto a = kdt::sample_state<3>(env, cfg, rng);
                const auto b = kdt::sample_state<3>(env, cfg, rng);
                const auto e = kdt::solve_optimal_edge<3>(a, b, cfg.rho);
                const double dense = kt::dense_penalty<3>(e, env.field, cfg.penalty, cfg.limits, 20000);
                if (!(dense > 0.0))
                {
                    continue;
                }
                const int k = std::max(50, kdt::penalty_samples(e.duration, cfg.penalty.spacing));
                const double err = std::abs(kdt::edge_penalty<3>(e.coeffs, e.duration, k, env.field, cfg.penalty, cfg.limits) - dense) / dense;
                ++pen_total;
                pen_bad += err > 0.02;
                pen_worst = std::max(pen_worst, err);
                pen_errs.push_back(err);
            }
        }
        fail_if(v, pen_bad > 0, fmt("penalty beyond 2%% on %g of %g edges (median %.2f%%, max %.0f%%)", pen_bad, pen_total,
                                    100 * kb::median(pen_errs), 100 * pen_worst));

        // Near set, parent choice and descendant weights on 200-node trees.
        int near_bad = 0, parent_bad = 0, weight_bad = 0, parent_cmp = 0;
        std::mt19937_64 rng(77);
        const Eigen::Vector3d lo(0.5, 0.5, 0.5), hi(19.5, 19.5, 5.5);
        for (int trial = 0; trial < 20; ++trial)
        {
            const auto env = kt::cluttered_environment(100 + trial, 20, 0.2);
            kdt::PlannerConfig<3> cfg;
            cfg.exact_near = true;
            const auto tree = kt::random_tree<3>(rng, 200, lo, hi);
            for (int id = 0; id < tree.size(); ++id)
            {
                weight_bad += kdt::descendant_weight(tree, id) != kt::dfs_weight(tree, id);
            }
            for (int q = 0; q < 5; ++q)
            {
                const auto x = kt::random_state<3>(rng, lo, hi);
                for (double radius : {150.0, 400.0})
                {
                    const auto cands = kdt::backward_near<3>(tree, x, cfg, radius);
                    std::set<int> got;
                    for (const auto& c : cands)
                    {
                        got.insert(c.id);
                    }
                    near_bad += got != kt::near_oracle(tree, x, cfg.rho, radius);
                    const int want = kt::parent_oracle(tree, cands, x, env, cfg);
                    const auto choice = kdt::choose_parent<3>(tree, cands, x, env, cfg);
                    parent_bad += want < 0 ? choice.has_value() : (!choice || choice->parent != want);
                    ++parent_cmp;
                }
            }
        }
        fail_if(v, near_bad > 0, fmt("backward_near differs on %g queries", near_bad));
        fail_if(v, parent_bad > 0, fmt("choose_parent differs on %g of %g queries", parent_bad, parent_cmp));
        fail_if(v, weight_bad > 0, fmt("descendant_weight differs on %g nodes", weight_bad));
        if (v.pass)
        {
            v.detail = fmt("EDT 100 grids exact, penalty %g edges max %.2f%%, ", pen_total, 100 * pen_worst) +
                       fmt("near/parent %g queries, weights 4000 nodes", parent_cmp);
        }
        return v;
    }

    // ------------------------------------------------------------------
    // 4. Fuzzing

    Verdict criterion_fuzz()
    {
        Verdict v;
        const auto env = kt::cluttered_environment(5, 12, 0.2);
        kdt::PlannerConfig<3> cfg;
        cfg.limits = Eigen::Vector3d(10.0, 20.0, 60.0);
        const Eigen::Vector3d lo(0.5, 0.5, 0.5), hi(19.5, 19.5, 5.5);
        std::mt19937_64 rng(2718);
        kdt::TrajTree<3> tree(cfg.rest_state(Eigen::Vector3d(10, 10, 3)), cfg.rest_state(hi), Eigen::Vector3d::Zero(),
                              Eigen::Vector3d(20, 20, 6));
        int inserts = 0, rewires = 0, deforms = 0, accepted = 0, locality_bad = 0;
        std::string first_error;
        for (int op = 0; op < 10000 && first_error.empty(); ++op)
        {
            const int kind = tree.size() < 10 ? 0 : static_cast<int>(rng() % 10);
            if (kind < 4)
            {
                const auto x = kt::random_state<3>(rng, lo, hi);
                const int parent = std::uniform_int_distribution<int>(0, tree.size() - 1)(rng);
                tree.insert(parent, x, kdt::solve_optimal_edge<3>(tree.node(parent).state, x, cfg.rho));
                ++inserts;
            }
            else if (kind < 7)
            {
                kdt::rewire_cascade<3>(tree, std::uniform_int_distribution<int>(1, tree.size() - 1)(rng), env, cfg, 300.0);
                ++rewires;
            }
            else
            {
                const int n = std::uniform_int_distribution<int>(1, tree.size() - 1)(rng);
                if (!kdt::deformable(tree, n))
                {
                    continue;
                }
                const auto before = tree.nodes();
                std::vector<char> inside(tree.size(), 0);
                for (int id : tree.subtree(n))
                {
                    inside[id] = 1;
                }
                accepted += kdt::deform_unit<3>(tree, n, env, cfg).verdict == kdt::DeformVerdict::accepted;
                ++deforms;
                for (int id = 0; id < tree.size(); ++id)
                {
                    if (!inside[id] && !kt::same_node(tree.node(id), before[id]))
                    {
                        ++locality_bad;
                        break;
                    }
                }
            }
            const std::string audit = tree.audit(1e-6, 1e-8);
            if (!audit.empty())
            {
                first_error = "op " + std::to_string(op) + ": " + audit;
            }
        }
        fail_if(v, !first_error.empty(), first_error);
        fail_if(v, locality_bad > 0, fmt("%g deformations touched nodes outside their subtree", locality_bad));
        fail_if(v, accepted == 0, "no deformation was accepted, locality not exercised");
        if (v.pass)
        {
            v.detail = fmt("%g inserts, %g cascades, %g deformations (%g accepted)", inserts, rewires, deforms, accepted) +
                       fmt(", %g nodes", tree.size());
        }
        return v;
    }

    // ------------------------------------------------------------------
    // 5-8. Planner comparisons on the forest scenario

    struct Forest
    {
        kdt::Environment env;
        kdt::PlannerConfig<3> cfg;
    };

    const Forest& forest()
    {
        static const Forest f = []
        {
            Forest out;
            out.cfg.start = Eigen::Vector3d(2.0, 2.0, 2.0);
            out.cfg.goal = Eigen::Vector3d(48.0, 28.0, 2.0);
            out.cfg.seed = 1;
            kb::MapSpec spec; // 50 x 30 x 5 m at 0.1 m
            spec.seed = 7;
            out.env = kdt::Environment::build(kb::generate_map(spec, out.cfg.start, out.cfg.goal), out.cfg.inflation);
            return out;
        }();
        return f;
    }

    std::string medians_line(const kb::BatchResult& b)
    {
        std::string s;
        for (std::size_t m = 0; m < b.methods.size(); ++m)
        {
            s += (m ? ", " : "") + b.methods[m].label() + " " + kb::detail::num(std::round(kb::median_final_cost(b.trials[m]) * 10) / 10);
        }
        return s;
    }

    std::vector<kb::Method> methods(const std::vector<std::string>& labels)
    {
        std::vector<kb::Method> out;
        for (const auto& l : labels)
        {
            out.push_back(kb::Method::parse(l));
        }
        return out;
    }

    kb::BatchResult variant_batch(const Options& o)
    {
        auto cfg = forest().cfg;
        cfg.time_budget = 3.0;
        return kb::run_batch<3>(forest().env, cfg,
                                methods({"krrtsharp", "krrtsharp-node-st", "krrtsharp-trunk-st", "krrtsharp-branch-st",
                                         "krrtsharp-tree-st"}),
                                o.trials, o.threads);
    }

    Verdict criterion_variants(const kb::BatchResult& b)
    {
        Verdict v;
        std::vector<double> med;
        for (const auto& t : b.trials)
        {
            med.push_back(kb::median_final_cost(t));
        }
        const char* names[] = {"OFF", "NODE", "TRUNK", "BRANCH", "TREE"};
        for (int i = 1; i < 5; ++i)
        {
            fail_if(v, !(med[i] < med[0]), std::string(names[i]) + " not below OFF");
        }
        fail_if(v, !(med[3] <= med[2]), "BRANCH above TRUNK");
        fail_if(v, !(med[3] <= med[1]), "BRANCH above NODE");
        v.detail = (v.pass ? "" : v.detail + "; ") + "medians: " + medians_line(b);
        return v;
    }

    Verdict criterion_first_solution(const kb::BatchResult& b)
    {
        Verdict v;
        std::string s;
        for (std::size_t m = 0; m < b.methods.size(); ++m)
        {
            const double t = kb::median_first_solution(b.trials[m]);
            fail_if(v, !(t < 0.3), b.methods[m].label() + " median " + kb::detail::num(t));
            s += (m ? ", " : "") + b.methods[m].label() + fmt(" %.0f ms", 1000 * t);
        }
        v.detail = (v.pass ? "" : v.detail + "; ") + "median first solution: " + s;
        return v;
    }

    Verdict criterion_modes(const Options& o)
    {
        Verdict v;
        auto cfg = forest().cfg;
        cfg.time_budget = 7.0;
        std::string detail;
        for (const std::string scheme : {"krrt", "krrtstar", "krrtsharp"})
        {
            const auto b = kb::run_batch<3>(forest().env, cfg, methods({scheme, scheme + "-branch-s", scheme + "-branch-st"}),
                                            o.trials, o.threads);
            const double off = kb::median_final_cost(b.trials[0]);
            const double sp = kb::median_final_cost(b.trials[1]);
            const double st = kb::median_final_cost(b.trials[2]);
            fail_if(v, !(st < sp), scheme + ": -ST not below -S");
            fail_if(v, !(sp < off), scheme + ": -S not below no-deform");
            detail += (detail.empty() ? "" : "; ") + medians_line(b);
        }
        v.detail = (v.pass ? "" : v.detail + " | ") + detail;
        return v;
    }

    Verdict criterion_tree_quality(const Options& o)
    {
        Verdict v;
        auto cfg = forest().cfg;
        cfg.time_budget = 0.0;
        cfg.node_budget = 1000;
        const auto b = kb::run_batch<3>(forest().env, cfg, methods({"krrtsharp", "krrtsharp-branch-st"}), o.trials, o.threads);
        int wins = 0;
        std::vector<double> ratio;
        for (int t = 0; t < o.trials; ++t)
        {
            const auto& off = b.trials[0][t];
            const auto& def = b.trials[1][t];
            wins += def.tree_cost < off.tree_cost;
            ratio.push_back(def.tree_cost / off.tree_cost);
        }
        const int need = (45 * o.trials + 49) / 50;
        fail_if(v, wins < need, fmt("BRANCH-ST lower in %g of %g seeds, need %g", wins, o.trials, need));
        v.detail = (v.pass ? "" : v.detail + "; ") +
                   fmt("BRANCH-ST total tree cost lower in %g/%g seeds, median ratio %.3f", wins, o.trials, kb::median(ratio));
        return v;
    }

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance criteria"};
    Options o;
    std::vector<int> only;
    app.add_option("--trials", o.trials, "paired seeds for the planner comparisons")->check(CLI::PositiveNumber);
    app.add_option("--threads", o.threads, "worker threads for the planner comparisons")->check(CLI::PositiveNumber);
    app.add_option("--only", only, "run only these criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    o.only.insert(only.begin(), only.end());

    int failures = 0;
    auto report = [&](int id, const char* name, const std::function<Verdict()>& fn)
    {
        if (!o.only.empty() && !o.only.count(id))
        {
            return;
        }
        const auto t0 = Clock::now();
        Verdict v;
        try
        {
            v = fn();
        }
        catch (const std::exception& e)
        {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        failures += !v.pass;
        std::printf("[%s] %d %s: %s (%.0f s)\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str(), since(t0));
        std::fflush(stdout);
    };

    report(1, "edge math", criterion_edge_math);
    report(2, "unit gradient", criterion_gradient);
    report(3, "oracle equivalence", criterion_oracles);
    report(4, "tree invariants under fuzzing", criterion_fuzz);

    std::optional<kb::BatchResult> variants;
    auto variant_run = [&]() -> const kb::BatchResult&
    {
        if (!variants)
        {
            variants = variant_batch(o);
        }
        return *variants;
    };
    report(5, "deformation variants vs OFF", [&] { return criterion_variants(variant_run()); });
    report(6, "spatio-temporal vs spatial vs none", [&] { return criterion_modes(o); });
    report(7, "first-solution latency", [&] { return criterion_first_solution(variant_run()); });
    report(8, "tree quality at 1000 nodes", [&] { return criterion_tree_quality(o); });

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
