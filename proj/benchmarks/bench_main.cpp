// Microbenchmarks for the hot paths: convolution kernels, full model
// forwards, the diffusion forward process, the optimizer sweep, and the
// evaluation metrics.  Run with --benchmark_filter=... to narrow.

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dnadiff/conv.hpp"
#include "dnadiff/diffusion.hpp"
#include "dnadiff/metrics.hpp"
#include "dnadiff/motif.hpp"
#include "dnadiff/ops.hpp"
#include "dnadiff/optim.hpp"
#include "dnadiff/rng.hpp"
#include "dnadiff/seqcodec.hpp"
#include "dnadiff/vae.hpp"

using namespace dnadiff;
using nn::Tensor;
using nn::Var;

namespace {

Tensor<float> random_tensor(nn::Shape shape, uint64_t seed) {
    RngStream rng(seed);
    Tensor<float> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal());
    return t;
}

std::vector<std::string> random_sequences(int64_t n, int64_t length, uint64_t seed) {
    RngStream rng(seed);
    const char* bases = "ACGT";
    std::vector<std::string> out;
    for (int64_t i = 0; i < n; ++i) {
        std::string s(static_cast<size_t>(length), 'A');
        for (auto& c : s) c = bases[rng.uniform_int(0, 3)];
        out.push_back(std::move(s));
    }
    return out;
}

void BM_Conv1dForward(benchmark::State& state) {
    // One VAE-stage convolution: 32 sequences, 32->64 channels, kernel 5.
    Tensor<float> x = random_tensor({32, 32, 128}, 1);
    Tensor<float> w = random_tensor({64, 32, 5}, 2);
    for (auto _ : state) {
        auto out = nn::conv1d(nn::constant(x), nn::constant(w), 1, 2);
        benchmark::DoNotOptimize(out->value.data.data());
    }
}
BENCHMARK(BM_Conv1dForward)->Unit(benchmark::kMillisecond);

void BM_Conv2dForward(benchmark::State& state) {
    // One denoiser-stage convolution: 32 maps, 32->32 channels, 8x8, kernel 3.
    Tensor<float> x = random_tensor({32, 32, 8, 8}, 3);
    Tensor<float> w = random_tensor({32, 32, 3, 3}, 4);
    for (auto _ : state) {
        auto out = nn::conv2d(nn::constant(x), nn::constant(w), 1, 1);
        benchmark::DoNotOptimize(out->value.data.data());
    }
}
BENCHMARK(BM_Conv2dForward)->Unit(benchmark::kMillisecond);

void BM_VaeEncode(benchmark::State& state) {
    VaeConfig cfg = VaeConfig::desk();
    VaeModelF model(cfg, 5);
    auto seqs = random_sequences(8, cfg.sequence_length, 6);
    for (auto _ : state) {
        Tensor<float> z = encode_means(model, seqs, 8);
        benchmark::DoNotOptimize(z.data.data());
    }
    state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_VaeEncode)->Unit(benchmark::kMillisecond);

void BM_VaeDecode(benchmark::State& state) {
    VaeConfig cfg = VaeConfig::desk();
    VaeModelF model(cfg, 7);
    Tensor<float> z = random_tensor({8, cfg.latent_channels, cfg.latent_height, cfg.latent_width}, 8);
    for (auto _ : state) {
        auto seqs = decode_to_sequences(model, z, 8);
        benchmark::DoNotOptimize(seqs.data());
    }
    state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_VaeDecode)->Unit(benchmark::kMillisecond);

void BM_UnetForward(benchmark::State& state) {
    // One denoiser evaluation on a sampling-sized slab; the ancestral sampler
    // calls this once per step per slab.
    UnetConfig cfg = UnetConfig::desk();
    UnetModel model(cfg, 9);
    Tensor<float> z = random_tensor({16, cfg.channels, cfg.height, cfg.width}, 10);
    std::vector<int64_t> t(16, 125);
    for (auto _ : state) {
        auto out = model.forward(z, t, false);
        benchmark::DoNotOptimize(out->value.data.data());
    }
    state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_UnetForward)->Unit(benchmark::kMillisecond);

void BM_ForwardDiffuse(benchmark::State& state) {
    NoiseSchedule sched = build_schedule();
    Tensor<float> z0 = random_tensor({64, 4, 8, 8}, 11);
    RngStream rng(12);
    for (auto _ : state) {
        Tensor<float> zt = forward_diffuse(z0, 500, sched, rng);
        benchmark::DoNotOptimize(zt.data.data());
    }
}
BENCHMARK(BM_ForwardDiffuse)->Unit(benchmark::kMicrosecond);

void BM_AdamStep(benchmark::State& state) {
    // 100k-parameter update sweep with gradients in place.
    nn::Parameter<float> p("w", random_tensor({100000}, 13));
    p.var->grad = random_tensor({100000}, 14);
    std::vector<nn::Parameter<float>*> params = {&p};
    nn::AdamConfig<float> cfg;
    for (auto _ : state) {
        nn::adam_step(params, cfg);
        benchmark::DoNotOptimize(p.value().data.data());
    }
    state.SetItemsProcessed(state.iterations() * 100000);
}
BENCHMARK(BM_AdamStep)->Unit(benchmark::kMicrosecond);

void BM_OneHotRoundtrip(benchmark::State& state) {
    auto seqs = random_sequences(1, 2048, 15);
    for (auto _ : state) {
        Tensor<float> t = one_hot_encode(seqs[0]);
        std::string back = decode_argmax(t);
        benchmark::DoNotOptimize(back.data());
    }
}
BENCHMARK(BM_OneHotRoundtrip)->Unit(benchmark::kMicrosecond);

void BM_FrechetDistance(benchmark::State& state) {
    // 256-dimensional Gaussian pair, the embedding width of the desk encoder.
    const int64_t dim = 256, n = 500;
    RngStream rng(16);
    Eigen::MatrixXd a(n, dim), b(n, dim);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < dim; ++j) {
            a(i, j) = rng.normal();
            b(i, j) = rng.normal() + 0.1;
        }
    GaussianSummary ga = fit_gaussian(a), gb = fit_gaussian(b);
    for (auto _ : state) {
        double d = frechet_distance(ga, gb);
        benchmark::DoNotOptimize(d);
    }
}
BENCHMARK(BM_FrechetDistance)->Unit(benchmark::kMillisecond);

void BM_MotifHistogram(benchmark::State& state) {
    auto seqs = random_sequences(500, 256, 17);
    for (auto _ : state) {
        MotifHistogram h = motif_histogram(seqs, "TATAWAW", 10, 128, 256);
        benchmark::DoNotOptimize(h.counts.data());
    }
    state.SetItemsProcessed(state.iterations() * 500);
}
BENCHMARK(BM_MotifHistogram)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
