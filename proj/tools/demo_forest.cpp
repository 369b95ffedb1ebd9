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

// Plans through a generated forest with and without tree deformation and
// prints the cost after each improvement.

#include "kdt/bench.hpp"
#include "kdt/planner.hpp"

#include <cstdio>
#include <cstdlib>

int main(int argc, char** argv)
{
    const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
    const double budget = argc > 2 ? std::atof(argv[2]) : 3.0;

    kdt::bench::MapSpec spec;
    spec.seed = 7;
    kdt::PlannerConfig<3> cfg;
    cfg.start = Eigen::Vector3d(2.0, 2.0, 2.0);
    cfg.goal = Eigen::Vector3d(48.0, 28.0, 2.0);
    cfg.seed = seed;
    cfg.time_budget = budget;

    const auto env = kdt::Environment::build(kdt::bench::generate_map(spec, cfg.start, cfg.goal), cfg.inflation);
    std::printf("map %dx%dx%d, %zu occupied cells, cost radius %.1f\n", env.raw.dims().x(), env.raw.dims().y(),
                env.raw.dims().z(), env.raw.count_occupied(), cfg.cost_radius(env));

    for (auto variant : {kdt::DeformVariant::off, kdt::DeformVariant::branch})
    {
        cfg.variant = variant;
        const auto r = kdt::plan<3>(cfg, env);
        std::printf("\n%s: %d nodes, %zu iterations, first solution %.3f s\n",
                    kdt::bench::to_string(variant).c_str(), r.node_count, r.iterations, r.first_solution_time);
        for (const auto& e : r.log)
        {
            std::printf("  %7.3f s  cost %9.2f  nodes %d\n", e.wall_time, e.best_cost, e.node_count);
        }
    }
    return 0;
}
