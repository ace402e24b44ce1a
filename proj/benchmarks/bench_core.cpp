#include <benchmark/benchmark.h>

#include <vector>

#include "holmes/attacks.hpp"
#include "holmes/detectors.hpp"
#include "holmes/evaluation.hpp"
#include "holmes/nn.hpp"
#include "holmes/rng.hpp"
#include "holmes/victim.hpp"

using namespace holmes;

namespace {

Tensor random_image(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-0.5, 0.5);
    return Tensor::vector(std::move(v));
}

const VictimModel& mnist_sized_victim() {
    static const VictimModel model(default_victim_network(784, 10, 1), 10);
    return model;
}

}  // namespace

static void BM_VictimForward(benchmark::State& state) {
    Rng rng(1);
    const Tensor x = random_image(rng, 784);
    for (auto _ : state) benchmark::DoNotOptimize(logits(mnist_sized_victim(), x));
}
BENCHMARK(BM_VictimForward);

static void BM_VictimForwardBackward(benchmark::State& state) {
    Rng rng(2);
    const Tensor x = random_image(rng, 784);
    const Network& net = mnist_sized_victim().network();
    const Tensor seed = Tensor::vector({1, 0, 0, 0, 0, 0, 0, 0, 0, -1});
    const bool with_params = state.range(0) != 0;
    for (auto _ : state) {
        const ActivationTrace trace = forward(net, x);
        benchmark::DoNotOptimize(backward(net, trace, seed, with_params));
    }
}
BENCHMARK(BM_VictimForwardBackward)->Arg(0)->Arg(1);

static void BM_Fgsm(benchmark::State& state) {
    Rng rng(3);
    const Tensor x = random_image(rng, 784);
    AttackConfig cfg;
    cfg.family = AttackFamily::fgsm;
    cfg.epsilon = 0.05;
    for (auto _ : state) benchmark::DoNotOptimize(fgsm(mnist_sized_victim(), x, cfg));
}
BENCHMARK(BM_Fgsm);

static void BM_CwL2(benchmark::State& state) {
    Rng rng(4);
    const Tensor x = random_image(rng, 784);
    AttackConfig cfg;
    cfg.family = AttackFamily::cw_l2;
    cfg.target = (predict(mnist_sized_victim(), x) + 1) % 10;
    cfg.max_iters = static_cast<int>(state.range(0));
    cfg.c_steps = 1;
    for (auto _ : state) benchmark::DoNotOptimize(cw_l2(mnist_sized_victim(), x, cfg));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CwL2)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_TopK(benchmark::State& state) {
    Rng rng(5);
    std::vector<double> y(10);
    for (double& v : y) v = rng.uniform(-20, 20);
    for (auto _ : state) benchmark::DoNotOptimize(topk_transform(y, 9));
}
BENCHMARK(BM_TopK);

static void BM_AucRoc(benchmark::State& state) {
    Rng rng(6);
    const auto n = static_cast<std::size_t>(state.range(0));
    std::vector<double> b(n), a(n);
    for (double& s : b) s = rng.uniform();
    for (double& s : a) s = rng.uniform();
    for (auto _ : state) benchmark::DoNotOptimize(auc_roc(b, a));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_AucRoc)->RangeMultiplier(10)->Range(100, 100000)->Complexity(benchmark::oNLogN);

BENCHMARK_MAIN();
