// Command-line front end: validate scenarios, run the closed-loop simulations,
// and post-process stored traces.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpf/simulation.hpp"
#include "cpf/trace_io.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;

cpf::Scenario load_or_exit(const std::string& path)
{
    return cpf::load_scenario(path);  // ValidationError handled by main
}

void write_outputs(const cpf::Trace& tr, const cpf::Scenario& sc, const std::string& out_dir)
{
    fs::create_directories(out_dir);
    cpf::export_trace(tr, (fs::path(out_dir) / "trace.csv").string());
    cpf::export_solver_diag(tr, (fs::path(out_dir) / "solver_diag.csv").string());
    cpf::write_summary(tr, (fs::path(out_dir) / "summary.json").string());
    cpf::emit_plot_data(tr, sc, out_dir);
}

nlohmann::json run_metrics(const cpf::Trace& tr)
{
    nlohmann::json m;
    m["max_phi"] = cpf::trace_max_phi(tr);
    m["phi_final"] = cpf::trace_final_phi(tr);
    m["tracking_cost"] = cpf::trace_tracking_cost(tr);
    m["y_final_norms"] = cpf::trace_final_y_norms(tr);
    return m;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"cooperative path-following simulator"};
    app.require_subcommand(1);

    std::string scenario_path, scenario_b_path, out_dir = "out", mode, trace_path;
    double duration_override = -1.0;
    int trace_stride = 1;
    unsigned seed = 0;

    CLI::App* run = app.add_subcommand("run", "simulate a scenario and export the trace");
    run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--mode", mode, "cpf | decoupled | consensus (defaults to the scenario's)");
    run->add_option("--duration", duration_override, "override the run duration [s]");
    run->add_option("--trace-stride", trace_stride, "keep every n-th integration row");
    run->add_option("--seed", seed, "reserved; the simulator is deterministic");

    CLI::App* check = app.add_subcommand("check", "validate a scenario file");
    check->add_option("--scenario", scenario_path, "scenario JSON file")->required();

    CLI::App* diag = app.add_subcommand("diag", "value-decrease and ISS reports for a stored trace");
    diag->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    diag->add_option("--trace", trace_path, "trace CSV produced by `run`")->required();

    CLI::App* compare = app.add_subcommand("compare", "paired-run metrics of two scenarios");
    compare->add_option("--scenario", scenario_path, "first scenario JSON")->required();
    compare->add_option("--scenario-b", scenario_b_path, "second scenario JSON")->required();
    compare->add_option("--mode", mode, "run mode for both scenarios");
    compare->add_option("--duration", duration_override, "override the run duration [s]");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*check) {
            load_or_exit(scenario_path);
            std::cout << "OK\n";
            return 0;
        }

        if (*run) {
            cpf::Scenario sc = load_or_exit(scenario_path);
            if (duration_override > 0.0) sc.timing.duration = duration_override;
            const std::string m = mode.empty() ? sc.mode : mode;
            cpf::Trace tr;
            try {
                tr = cpf::run_scenario(sc, m);
            } catch (const cpf::SimulationAborted& e) {
                std::cerr << "solver infeasible: " << e.what() << "\n";
                write_outputs(e.partial, sc, out_dir);
                std::cerr << "partial trace written to " << out_dir << "\n";
                return kExitInfeasible;
            }
            if (trace_stride > 1) {
                cpf::Trace thinned = tr;
                thinned.rows.clear();
                const int n = tr.n_agents;
                const std::size_t blocks = tr.rows.size() / n;
                for (std::size_t b = 0; b < blocks; ++b) {
                    if (b % trace_stride != 0 && b + 1 != blocks) continue;
                    for (int i = 0; i < n; ++i) thinned.rows.push_back(tr.rows[b * n + i]);
                }
                tr = std::move(thinned);
            }
            write_outputs(tr, sc, out_dir);
            std::cout << run_metrics(tr).dump(2) << "\n";
            return 0;
        }

        if (*diag) {
            const cpf::Scenario sc = load_or_exit(scenario_path);
            cpf::Trace tr = cpf::read_trace_csv(trace_path);
            tr.sample_times = sc.sample_times();
            tr.scenario_name = sc.name;

            nlohmann::json rep;
            const auto vd = cpf::trace_value_decrease(sc, tr);
            for (std::size_t i = 0; i < vd.size(); ++i) {
                nlohmann::json a;
                a["agent"] = i + 1;
                a["checks"] = vd[i].checks;
                a["flagged"] = vd[i].flagged;
                a["flag_fraction"] = vd[i].flag_fraction();
                a["max_excess"] = vd[i].max_excess;
                rep["value_decrease"].push_back(a);
            }
            const cpf::IssTraceReport iss = cpf::trace_iss_check(sc, tr);
            rep["iss"]["checks"] = iss.checks;
            rep["iss"]["failures"] = iss.failures;
            rep["iss"]["min_margin"] = iss.min_margin;
            std::cout << rep.dump(2) << "\n";
            return 0;
        }

        if (*compare) {
            cpf::Scenario a = load_or_exit(scenario_path);
            cpf::Scenario b = load_or_exit(scenario_b_path);
            if (duration_override > 0.0) {
                a.timing.duration = duration_override;
                b.timing.duration = duration_override;
            }
            const cpf::Trace ta = cpf::run_scenario(a, mode.empty() ? a.mode : mode);
            const cpf::Trace tb = cpf::run_scenario(b, mode.empty() ? b.mode : mode);
            nlohmann::json rep;
            rep["a"] = run_metrics(ta);
            rep["b"] = run_metrics(tb);
            rep["max_phi_ratio_b_over_a"] =
                cpf::trace_max_phi(tb) / std::max(cpf::trace_max_phi(ta), 1e-300);
            rep["tracking_cost_ratio_b_over_a"] =
                cpf::trace_tracking_cost(tb) / std::max(cpf::trace_tracking_cost(ta), 1e-300);
            std::cout << rep.dump(2) << "\n";
            return 0;
        }
    } catch (const cpf::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return kExitValidation;
    } catch (const cpf::InfeasibleError& e) {
        std::cerr << "solver infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
