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

#include "kdt/deform.hpp"
#include "kdt/env_field.hpp"
#include "kdt/traj_tree.hpp"

#include <chrono>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

namespace kdt
{

    struct LogEntry
    {
        double wall_time = 0.0; // seconds since the run started
        double best_cost = 0.0;
        int node_count = 0;
    };

    template <int S>
    struct RunReport
    {
        Solution<S> best;
        std::vector<LogEntry> log; // one entry per improvement of the best cost
        int node_count = 0;
        std::size_t iterations = 0;
        double elapsed = 0.0;
        double first_solution_time = std::numeric_limits<double>::quiet_NaN();
        std::size_t deform_units = 0;    // units handed to deformation
        std::size_t deform_accepted = 0; // units committed
        double deform_time = 0.0;        // seconds spent deforming
        std::shared_ptr<const TrajTree<S>> tree;

        bool solved() const { return best.found(); }
    };

    /// Grows the tree until the time, node or iteration budget runs out.
    template <int S>
    RunReport<S> plan(const PlannerConfig<S>& cfg, const Environment& env)
    {
        cfg.validate();
        if (cfg.time_budget <= 0.0 && cfg.node_budget == 0 && cfg.iteration_budget == 0)
        {
            throw std::invalid_argument("planner needs a time, node or iteration budget");
        }
        if (env.inflated.occupied_at(cfg.start) || env.inflated.occupied_at(cfg.goal))
        {
            throw std::invalid_argument("start or goal lies in an occupied (inflated) cell");
        }

        using Clock = std::chrono::steady_clock;
        const auto t0 = Clock::now();
        const auto seconds = [&] { return std::chrono::duration<double>(Clock::now() - t0).count(); };
        std::optional<Clock::time_point> deadline;
        if (cfg.time_budget > 0.0)
        {
            deadline = t0 + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(cfg.time_budget));
        }

        auto tree = std::make_shared<TrajTree<S>>(cfg.start_state(), cfg.goal_state(), env.raw.origin(), env.raw.upper(),
                                                   std::max(1.0, env.raw.resolution() * 10.0));
        const double radius = cfg.cost_radius(env);
        std::mt19937_64 rng(cfg.seed);
        RunReport<S> report;

        auto note_improvement = [&]
        {
            if (tree->refresh_best())
            {
                const double now = seconds();
                if (report.log.empty())
                {
                    report.first_solution_time = now;
                }
                report.log.push_back({now, tree->best().cost, tree->size()});
            }
        };

        for (;;)
        {
            if (deadline && Clock::now() >= *deadline)
            {
                break;
            }
            if (cfg.node_budget > 0 && static_cast<std::size_t>(tree->size()) >= cfg.node_budget)
            {
                break;
            }
            if (cfg.iteration_budget > 0 && report.iterations >= cfg.iteration_budget)
            {
                break;
            }
            ++report.iterations;

            const State<S> x_new = sample_state<S>(env, cfg, rng);
            const auto choice = choose_parent<S>(*tree, backward_near<S>(*tree, x_new, cfg, radius), x_new, env, cfg);
            if (!choice)
            {
                continue;
            }
            const int id = tree->insert(choice->parent, x_new, choice->edge);
            try_connect_goal<S>(*tree, id, env, cfg);
            note_improvement();

            if (cfg.variant != DeformVariant::off && tree->best().found())
            {
                const auto units = select_units<S>(*tree, choice->parent, cfg.variant);
                const auto d0 = Clock::now();
                report.deform_units += units.size();
                report.deform_accepted += static_cast<std::size_t>(deform_in_order<S>(*tree, units, env, cfg, deadline));
                report.deform_time += std::chrono::duration<double>(Clock::now() - d0).count();
                note_improvement();
            }

            switch (cfg.scheme)
            {
            case GrowthScheme::krrt:
                break;
            case GrowthScheme::krrt_star:
                rewire_once<S>(*tree, id, env, cfg, radius);
                break;
            case GrowthScheme::krrt_sharp:
                rewire_cascade<S>(*tree, id, env, cfg, radius);
                break;
            }
            note_improvement();
        }

        report.elapsed = seconds();
        report.best = tree->best();
        report.node_count = tree->size();
        report.tree = std::move(tree);
        return report;
    }

} // namespace kdt
