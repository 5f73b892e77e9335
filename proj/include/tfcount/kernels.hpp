#pragma once

// Dense inner loops of the similarity path. Each kernel exists twice:
// `serial` is the straightforward reference used by the tests, `omp` is the
// OpenMP version the library calls. Both must agree to within float rounding
// (exactly, for the integer kernels).
//
// The omp kernels never use floating-point reduction clauses: partial sums are
// written per row and folded serially so results do not depend on the thread
// count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tfcount/mask.hpp"

namespace tfcount::kernels {

struct CellGrid {
  int grid_w = 0;
  int grid_h = 0;
  int stride = 1;
};

namespace serial {
// per-cell cosine(features[cell], ref); zero-norm cells give 0
std::vector<float> cosine_map(std::span<const float> features, int channels,
                              std::span<const float> ref);
// bilinear resize with half-pixel centres (align_corners = false), edge clamp
std::vector<float> bilinear_resize(std::span<const float> src, int src_w, int src_h,
                                   int dst_w, int dst_h);
std::pair<float, float> min_max(std::span<const float> values);
// sum of values over set mask pixels; values is row-major at mask size
double masked_sum(std::span<const float> values, const BinaryMask& mask);
// number of mask pixels falling into each feature cell
std::vector<std::uint32_t> cell_coverage(const BinaryMask& mask, CellGrid grid);
// mean feature vector over cells with selected[cell] != 0
std::vector<float> selected_mean(std::span<const float> features, int channels,
                                 std::span<const std::uint8_t> selected);
}  // namespace serial

namespace omp {
// per-cell cosine(features[cell], ref); zero-norm cells give 0
std::vector<float> cosine_map(std::span<const float> features, int channels,
                              std::span<const float> ref);
// bilinear resize with half-pixel centres (align_corners = false), edge clamp
std::vector<float> bilinear_resize(std::span<const float> src, int src_w, int src_h,
                                   int dst_w, int dst_h);
std::pair<float, float> min_max(std::span<const float> values);
// sum of values over set mask pixels; values is row-major at mask size
double masked_sum(std::span<const float> values, const BinaryMask& mask);
// number of mask pixels falling into each feature cell
std::vector<std::uint32_t> cell_coverage(const BinaryMask& mask, CellGrid grid);
// mean feature vector over cells with selected[cell] != 0
std::vector<float> selected_mean(std::span<const float> features, int channels,
                                 std::span<const std::uint8_t> selected);
}  // namespace omp

/// Number of threads the omp kernels will use (1 when built without OpenMP).
int max_threads();

}  // namespace tfcount::kernels
