#pragma once

#include "mopd/core.hpp"

#include <vector>

namespace mopd {

// Run-length encoding of a binary mask over row-major pixels: alternating
// run lengths starting with a background run (possibly 0). Runs sum to h*w.
std::vector<int> rle_encode(const MaskImage& mask);
MaskImage rle_decode(const std::vector<int>& runs, int h, int w);

}  // namespace mopd
