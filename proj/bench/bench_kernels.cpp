// Serial reference vs OpenMP kernels: likelihood (value + derivatives) and
// Krinsky-Robb draws.

#include <random>

#include "cvm/data_io.hpp"
#include "cvm/kernels.hpp"
#include "cvm/model.hpp"

#include <benchmark/benchmark.h>

namespace {

// Uncompressed respondent rows with two covariates, so rows do not merge.
std::vector<cvm::Observation> rows(std::size_t n) {
    const auto design = cvm::reference_design();
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> outcome(0, 7);
    std::uniform_int_distribution<std::size_t> pick(0, design.pairs.size() - 1);
    std::uniform_real_distribution<double> cov(1.0, 5.0);
    std::vector<cvm::Observation> out(n);
    for (auto& o : out) {
        const auto oc = static_cast<cvm::Outcome>(outcome(rng));
        o.censor = cvm::outcome_to_interval(cvm::arm_of(oc), design.pairs[pick(rng)], oc);
        o.covariates = {cov(rng), cov(rng)};
    }
    return out;
}

const cvm::SpikeParams kParams{0.8, {0.05, -0.03}, 0.19};

template <bool Parallel>
void BM_Likelihood(benchmark::State& state) {
    const auto data = rows(static_cast<std::size_t>(state.range(0)));
    const auto order = static_cast<cvm::kernels::Order>(state.range(1));
    for (auto _ : state) {
        auto r = Parallel ? cvm::kernels::likelihood_parallel(kParams, data, order)
                          : cvm::kernels::likelihood_serial(kParams, data, order);
        benchmark::DoNotOptimize(r.value);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_KrinskyRobb(benchmark::State& state) {
    Eigen::VectorXd mean(4);
    mean << 0.8, 0.05, -0.03, 0.19;
    Eigen::MatrixXd chol = Eigen::MatrixXd::Identity(4, 4) * 0.01;
    const std::vector<double> s{3.0, 2.5};
    for (auto _ : state) {
        auto r = Parallel ? cvm::kernels::krinsky_robb_parallel(mean, chol, s, state.range(0), 1)
                          : cvm::kernels::krinsky_robb_serial(mean, chol, s, state.range(0), 1);
        benchmark::DoNotOptimize(r.wtp.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void likelihood_args(benchmark::internal::Benchmark* b) {
    for (long n : {1'000, 100'000})
        for (long order : {0, 2}) b->Args({n, order});
}

}  // namespace

BENCHMARK(BM_Likelihood<false>)->Name("likelihood/serial")->Apply(likelihood_args);
BENCHMARK(BM_Likelihood<true>)->Name("likelihood/openmp")->Apply(likelihood_args);
BENCHMARK(BM_KrinskyRobb<false>)->Name("krinsky_robb/serial")->Arg(5'000)->Arg(100'000);
BENCHMARK(BM_KrinskyRobb<true>)->Name("krinsky_robb/openmp")->Arg(5'000)->Arg(100'000);

BENCHMARK_MAIN();
