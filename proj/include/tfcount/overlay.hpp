#pragma once

#include <vector>

#include "tfcount/similarity.hpp"
#include "tfcount/types.hpp"

namespace tfcount {

/// Copy of `base` with each mask filled translucently, its boundary drawn
/// solid, and `count` stamped in the top-left corner.
Image render_overlay(const Image& base, const std::vector<ScoredMask>& masks, long long count);

}  // namespace tfcount
