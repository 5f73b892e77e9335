#include <benchmark/benchmark.h>

#include <random>

#include "tfcount/kernels.hpp"
#include "tfcount/pipelines.hpp"
#include "tfcount/synthetic.hpp"

using namespace tfcount;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

BinaryMask disc(int side) {
  BinaryMask m(side, side);
  const double r = side * 0.4, c = side * 0.5;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      if ((x - c) * (x - c) + (y - c) * (y - c) <= r * r) m.set(x, y);
  return m;
}

// features: a 64x64 grid of 256-channel vectors, the size of a ViT-B feature map
constexpr int kGrid = 64, kChannels = 256;

template <auto Fn>
void BM_cosine_map(benchmark::State& state) {
  const auto features = random_floats(static_cast<std::size_t>(kGrid) * kGrid * kChannels, 1);
  const auto ref = random_floats(kChannels, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(features, kChannels, ref));
}

template <auto Fn>
void BM_bilinear_resize(benchmark::State& state) {
  const auto src = random_floats(static_cast<std::size_t>(kGrid) * kGrid, 3);
  const int out = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(Fn(src, kGrid, kGrid, out, out));
}

template <auto Fn>
void BM_min_max(benchmark::State& state) {
  const auto v = random_floats(static_cast<std::size_t>(state.range(0)) * state.range(0), 4);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(v));
}

template <auto Fn>
void BM_masked_sum(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto v = random_floats(static_cast<std::size_t>(side) * side, 5);
  const auto mask = disc(side);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(v, mask));
}

template <auto Fn>
void BM_cell_coverage(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto mask = disc(side);
  const kernels::CellGrid grid{side / 16, side / 16, 16};
  for (auto _ : state) benchmark::DoNotOptimize(Fn(mask, grid));
}

template <auto Fn>
void BM_selected_mean(benchmark::State& state) {
  const auto features = random_floats(static_cast<std::size_t>(kGrid) * kGrid * kChannels, 6);
  std::vector<std::uint8_t> selected(static_cast<std::size_t>(kGrid) * kGrid);
  for (std::size_t i = 0; i < selected.size(); ++i) selected[i] = i % 3 == 0;
  for (auto _ : state) benchmark::DoNotOptimize(Fn(features, kChannels, selected));
}

void BM_count(benchmark::State& state) {
  synthetic::SceneSpec spec;
  spec.targets = 40;
  spec.distractors = 15;
  const auto scene = synthetic::generate_scene(spec, 9);
  synthetic::SyntheticBackend be(scene);
  const auto img = synthetic::render(scene);
  PromptSet prompts;
  prompts.boxes.push_back(synthetic::exemplar_box(scene, 2));
  PipelineConfig cfg;
  cfg.mode = state.range(0) ? CountMode::kPriorGuided : CountMode::kVanilla;
  long long calls = 0;
  for (auto _ : state) calls = count_objects(be, img, prompts, cfg).stats.decoder_calls;
  state.counters["decoder_calls"] = static_cast<double>(calls);
  state.SetLabel(cfg.mode == CountMode::kPriorGuided ? "prior_guided" : "vanilla");
}

}  // namespace

BENCHMARK_TEMPLATE(BM_cosine_map, kernels::serial::cosine_map)->Name("cosine_map/serial");
BENCHMARK_TEMPLATE(BM_cosine_map, kernels::omp::cosine_map)->Name("cosine_map/omp");
BENCHMARK_TEMPLATE(BM_bilinear_resize, kernels::serial::bilinear_resize)->Name("bilinear_resize/serial")->Arg(256)->Arg(1024);
BENCHMARK_TEMPLATE(BM_bilinear_resize, kernels::omp::bilinear_resize)->Name("bilinear_resize/omp")->Arg(256)->Arg(1024);
BENCHMARK_TEMPLATE(BM_min_max, kernels::serial::min_max)->Name("min_max/serial")->Arg(1024);
BENCHMARK_TEMPLATE(BM_min_max, kernels::omp::min_max)->Name("min_max/omp")->Arg(1024);
BENCHMARK_TEMPLATE(BM_masked_sum, kernels::serial::masked_sum)->Name("masked_sum/serial")->Arg(1024);
BENCHMARK_TEMPLATE(BM_masked_sum, kernels::omp::masked_sum)->Name("masked_sum/omp")->Arg(1024);
BENCHMARK_TEMPLATE(BM_cell_coverage, kernels::serial::cell_coverage)->Name("cell_coverage/serial")->Arg(1024);
BENCHMARK_TEMPLATE(BM_cell_coverage, kernels::omp::cell_coverage)->Name("cell_coverage/omp")->Arg(1024);
BENCHMARK_TEMPLATE(BM_selected_mean, kernels::serial::selected_mean)->Name("selected_mean/serial");
BENCHMARK_TEMPLATE(BM_selected_mean, kernels::omp::selected_mean)->Name("selected_mean/omp");
BENCHMARK(BM_count)->Name("count")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
