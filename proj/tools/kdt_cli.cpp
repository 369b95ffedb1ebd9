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

// kdt: plan, benchmark and export kinodynamic trajectory trees.

#include "kdt/bench.hpp"
#include "kdt/env_field.hpp"
#include "kdt/planner.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace
{

    namespace fs = std::filesystem;
    using kdt::bench::Settings;

    struct Common
    {
        std::string config;
        std::string map;
        std::vector<std::string> sets;
        std::string seed, budget, variant, deform, scheme;
    };

    void add_common(CLI::App* app, Common& c)
    {
        app->add_option("-c,--config", c.config, "kdtcfg=1 key/value file")->check(CLI::ExistingFile);
        app->add_option("--map", c.map, "map file (overrides the generator)")->check(CLI::ExistingFile);
        app->add_option("--set", c.sets, "override a config key, key=value (repeatable)");
        app->add_option("--seed", c.seed, "RNG seed (base seed for batches)");
        app->add_option("--budget-s", c.budget, "wall-clock budget per run in seconds");
        app->add_option("--variant", c.variant, "deformation variant: off, node, trunk, branch, tree");
        app->add_option("--deform", c.deform, "deformation mode: off, s, st");
        app->add_option("--scheme", c.scheme, "growth scheme: krrt, krrtstar, krrtsharp");
    }

    Settings load_settings(const Common& c)
    {
        Settings st = Settings::parse_string("kdtcfg=1\n");
        if (!c.config.empty())
        {
            std::ifstream is(c.config);
            st = Settings::parse(is);
        }
        for (const auto& kv : c.sets)
        {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
            {
                throw kdt::bench::ConfigError("--set expects key=value, got '" + kv + "'");
            }
            st.set(kdt::bench::detail::trim(kv.substr(0, eq)), kdt::bench::detail::trim(kv.substr(eq + 1)));
        }
        if (!c.map.empty())
        {
            st.set("map", c.map);
        }
        const std::pair<const char*, const std::string*> flags[] = {
            {"seed", &c.seed}, {"budget_s", &c.budget}, {"variant", &c.variant}, {"deform", &c.deform}, {"scheme", &c.scheme}};
        for (const auto& [key, value] : flags)
        {
            if (!value->empty())
            {
                st.set(key, *value);
            }
        }
        return st;
    }

    template <int S>
    kdt::Environment load_environment(const Settings& st, const kdt::PlannerConfig<S>& cfg)
    {
        kdt::OccupancyGrid grid = st.has("map") ? kdt::load_map(st.text("map", ""))
                                                : kdt::bench::generate_map(kdt::bench::map_spec(st), cfg.start, cfg.goal);
        return kdt::Environment::build(std::move(grid), cfg.inflation);
    }

    void write_file(const fs::path& path, const std::function<void(std::ostream&)>& fn)
    {
        if (path.has_parent_path())
        {
            fs::create_directories(path.parent_path());
        }
        std::ofstream os(path);
        if (!os)
        {
            throw std::runtime_error("cannot write " + path.string());
        }
        fn(os);
    }

    template <int S>
    int run_plan(const Settings& st, const std::string& out_dir)
    {
        const auto cfg = kdt::bench::planner_config<S>(st);
        const auto env = load_environment<S>(st, cfg);
        const auto r = kdt::plan<S>(cfg, env);
        kdt::bench::write_log_csv(std::cout, r.log);
        std::cerr << "nodes " << r.node_count << ", iterations " << r.iterations << ", best cost "
                  << kdt::bench::detail::num(r.best.cost) << '\n';
        if (!out_dir.empty())
        {
            const fs::path dir(out_dir);
            write_file(dir / "run.csv", [&](std::ostream& os) { kdt::bench::write_log_csv(os, r.log); });
            write_file(dir / "best.csv", [&](std::ostream& os) { kdt::bench::write_trajectory_csv<S>(os, r.best.edges); });
            write_file(dir / "tree.csv", [&](std::ostream& os) { kdt::bench::write_tree_csv<S>(os, *r.tree); });
            write_file(dir / "plot.svg", [&](std::ostream& os) { kdt::bench::write_svg<S>(os, env.raw, r.tree.get(), &r.best); });
        }
        return r.solved() ? 0 : 2;
    }

    template <int S>
    int run_bench(const Settings& st, const std::string& out_dir)
    {
        const auto cfg = kdt::bench::planner_config<S>(st);
        const auto env = load_environment<S>(st, cfg);
        std::vector<kdt::bench::Method> methods;
        std::stringstream ss(st.text("methods", "krrtsharp,krrtsharp-node-st,krrtsharp-trunk-st,krrtsharp-branch-st,krrtsharp-tree-st"));
        std::string m;
        while (std::getline(ss, m, ','))
        {
            methods.push_back(kdt::bench::Method::parse(kdt::bench::detail::trim(m)));
        }
        const int trials = static_cast<int>(st.integer("trials", 10));
        const int threads = static_cast<int>(st.integer("threads", 1));
        const auto batch = kdt::bench::run_batch<S>(env, cfg, methods, trials, threads);
        const double horizon = cfg.time_budget > 0.0 ? cfg.time_budget : 1.0;
        const auto table = kdt::bench::convergence_table(batch, horizon, st.number("bin_s", 0.05));
        kdt::bench::write_summary_csv(std::cout, batch);
        if (!out_dir.empty())
        {
            const fs::path dir(out_dir);
            write_file(dir / "table.csv", [&](std::ostream& os) { kdt::bench::write_table_csv(os, table); });
            write_file(dir / "summary.csv", [&](std::ostream& os) { kdt::bench::write_summary_csv(os, batch); });
            for (std::size_t i = 0; i < methods.size(); ++i)
            {
                for (const auto& t : batch.trials[i])
                {
                    const auto name = methods[i].label() + "_seed" + std::to_string(t.seed) + ".csv";
                    write_file(dir / "logs" / name, [&](std::ostream& os) { kdt::bench::write_log_csv(os, t.log); });
                    if (!t.error.empty())
                    {
                        std::cerr << methods[i].label() << " seed " << t.seed << ": " << t.error << '\n';
                    }
                }
            }
            write_file(dir / "config.kdtcfg", [&](std::ostream& os) { st.write(os); });
        }
        return 0;
    }

    template <int S>
    int run_export(const Settings& st, const std::string& what, const std::string& out, const std::string& svg)
    {
        const auto cfg = kdt::bench::planner_config<S>(st);
        const auto env = load_environment<S>(st, cfg);
        const auto r = kdt::plan<S>(cfg, env);
        auto emit = [&](std::ostream& os)
        {
            if (what == "tree")
            {
                kdt::bench::write_tree_csv<S>(os, *r.tree);
            }
            else
            {
                kdt::bench::write_trajectory_csv<S>(os, r.best.edges);
            }
        };
        if (out.empty() || out == "-")
        {
            emit(std::cout);
        }
        else
        {
            write_file(out, emit);
        }
        if (!svg.empty())
        {
            write_file(svg, [&](std::ostream& os)
                       { kdt::bench::write_svg<S>(os, env.raw, what == "tree" ? r.tree.get() : nullptr, &r.best); });
        }
        if (what == "best" && !r.solved())
        {
            std::cerr << "no solution within the budget\n";
            return 2;
        }
        return 0;
    }

    template <template <int> class Fn, typename... Args>
    int dispatch(int order, Args&&... args)
    {
        switch (order)
        {
        case 2:
            return Fn<2>::run(std::forward<Args>(args)...);
        case 3:
            return Fn<3>::run(std::forward<Args>(args)...);
        case 4:
            return Fn<4>::run(std::forward<Args>(args)...);
        default:
            throw kdt::bench::ConfigError("order must be 2, 3 or 4");
        }
    }

    template <int S>
    struct PlanCmd
    {
        static int run(const Settings& st, const std::string& out) { return run_plan<S>(st, out); }
    };
    template <int S>
    struct BenchCmd
    {
        static int run(const Settings& st, const std::string& out) { return run_bench<S>(st, out); }
    };
    template <int S>
    struct ExportCmd
    {
        static int run(const Settings& st, const std::string& what, const std::string& out, const std::string& svg)
        {
            return run_export<S>(st, what, out, svg);
        }
    };

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Kinodynamic trajectory-tree planner with tree deformation"};
    app.require_subcommand(1);

    Common plan_opts, bench_opts, gen_opts, export_opts;
    std::string plan_out, bench_out, gen_out, export_what = "best", export_out, export_svg;
    std::string trials, threads, methods;

    auto* plan_cmd = app.add_subcommand("plan", "run the planner once and print the improvement log");
    add_common(plan_cmd, plan_opts);
    plan_cmd->add_option("-o,--out-dir", plan_out, "also write run.csv, best.csv, tree.csv and plot.svg here");

    auto* bench_cmd = app.add_subcommand("bench", "paired-seed batch over a method matrix");
    add_common(bench_cmd, bench_opts);
    bench_cmd->add_option("--trials", trials, "trials per method");
    bench_cmd->add_option("--threads", threads, "worker threads");
    bench_cmd->add_option("--methods", methods, "comma list, e.g. krrtsharp,krrtsharp-branch-st");
    bench_cmd->add_option("-o,--out-dir", bench_out, "directory for table.csv, summary.csv and per-trial logs");

    auto* gen_cmd = app.add_subcommand("genmap", "generate a forest or cave map");
    add_common(gen_cmd, gen_opts);
    gen_cmd->add_option("-o,--out", gen_out, "output map file")->required();

    auto* export_cmd = app.add_subcommand("export", "run the planner and export geometry");
    add_common(export_cmd, export_opts);
    export_cmd->add_option("--what", export_what, "tree or best")->check(CLI::IsMember({"tree", "best"}));
    export_cmd->add_option("-o,--out", export_out, "CSV output (default stdout)");
    export_cmd->add_option("--svg", export_svg, "also write a top-down SVG");

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (*plan_cmd)
        {
            const auto st = load_settings(plan_opts);
            return dispatch<PlanCmd>(st.order(), st, plan_out);
        }
        if (*bench_cmd)
        {
            auto st = load_settings(bench_opts);
            if (!trials.empty())
            {
                st.set("trials", trials);
            }
            if (!threads.empty())
            {
                st.set("threads", threads);
            }
            if (!methods.empty())
            {
                st.set("methods", methods);
            }
            return dispatch<BenchCmd>(st.order(), st, bench_out);
        }
        if (*gen_cmd)
        {
            const auto st = load_settings(gen_opts);
            const auto cfg = kdt::bench::planner_config<3>(st);
            kdt::save_map(gen_out, kdt::bench::generate_map(kdt::bench::map_spec(st), cfg.start, cfg.goal));
            return 0;
        }
        if (*export_cmd)
        {
            const auto st = load_settings(export_opts);
            return dispatch<ExportCmd>(st.order(), st, export_what, export_out, export_svg);
        }
    }
    catch (const std::exception& e)
    {
        std::cerr << "kdt: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
