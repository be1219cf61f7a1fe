#include <benchmark/benchmark.h>

#include "cpf/scenario.hpp"
#include "cpf/simulation.hpp"

namespace {

using namespace cpf;

Scenario q100()
{
    static const Scenario sc =
        load_scenario(std::string(CPF_SCENARIO_DIR) + "/paper_q100.json");
    return sc;
}

MpcContext middle_agent_ctx(const Scenario& sc)
{
    return MpcContext{sc.agents[1].model, sc.speed, sc.graph, sc.gain, 1};
}

ProblemParams off_path_params(const Scenario& sc)
{
    ProblemParams p;
    p.t = 0.0;
    p.x.p = sc.agents[1].initial.p;
    p.x.R = sc.agents[1].initial.R;
    p.gamma = 15.0;
    p.gamma_neighbors = {{0, 14.5}, {2, 16.0}};
    p.eta = 0.1;
    p.t0 = 0.0;
    p.sample_delta_k = 0.1;
    return p;
}

void BM_PerronSpectrum(benchmark::State& state)
{
    const Scenario sc = q100();
    for (auto _ : state) {
        benchmark::DoNotOptimize(verify_perron(sc.graph, sc.gain));
    }
}
BENCHMARK(BM_PerronSpectrum);

void BM_PathEvaluation(benchmark::State& state)
{
    const Scenario sc = q100();
    const PathSpec& path = sc.agents[0].model.path;
    double gamma = 0.0;
    for (auto _ : state) {
        gamma += 1e-3;
        benchmark::DoNotOptimize(eval_path(path, gamma));
        benchmark::DoNotOptimize(eval_path_derivative(path, gamma));
    }
}
BENCHMARK(BM_PathEvaluation);

void BM_IntegrateOneSecond(benchmark::State& state)
{
    AgentFlowState s;
    const InputSignal sig = [](double, const AgentFlowState&) {
        return FlowInputs{{1.5, 0.2, -0.3}, 0.1, 0.0, 2.0};
    };
    for (auto _ : state) {
        benchmark::DoNotOptimize(integrate(s, sig, 0.0, 1e-3, 1000));
    }
}
BENCHMARK(BM_IntegrateOneSecond);

void BM_Prediction(benchmark::State& state)
{
    const Scenario sc = q100();
    const MpcContext ctx = middle_agent_ctx(sc);
    const ProblemParams p = off_path_params(sc);
    const AuxConsensusSignal sig = build_aux_signal(ctx, p);
    const DecisionVars dec = auxiliary_pair(ctx, p);
    Prediction pred;
    for (auto _ : state) {
        predict_into(p, dec, ctx.model, ctx.speed, sig, pred);
        benchmark::DoNotOptimize(pred.terminal_eta());
    }
}
BENCHMARK(BM_Prediction);

void BM_TotalCost(benchmark::State& state)
{
    const Scenario sc = q100();
    const MpcContext ctx = middle_agent_ctx(sc);
    const ProblemParams p = off_path_params(sc);
    const AuxConsensusSignal sig = build_aux_signal(ctx, p);
    const DecisionVars dec = auxiliary_pair(ctx, p);
    for (auto _ : state) {
        benchmark::DoNotOptimize(total_cost(p, dec, ctx.model, ctx.speed, sig));
    }
}
BENCHMARK(BM_TotalCost);

void BM_SolveColdStart(benchmark::State& state)
{
    const Scenario sc = q100();
    const MpcContext ctx = middle_agent_ctx(sc);
    const ProblemParams p = off_path_params(sc);
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve(ctx, p, sc.solver));
    }
}
BENCHMARK(BM_SolveColdStart)->Unit(benchmark::kMillisecond);

void BM_SolveWarmStart(benchmark::State& state)
{
    const Scenario sc = q100();
    const MpcContext ctx = middle_agent_ctx(sc);
    const ProblemParams p = off_path_params(sc);
    const SolveResult first = solve(ctx, p, sc.solver);
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve(ctx, p, sc.solver, first.dec));
    }
}
BENCHMARK(BM_SolveWarmStart)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
