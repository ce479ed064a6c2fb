#include "mopd/rle.hpp"

#include <numeric>

namespace mopd {

std::vector<int> rle_encode(const MaskImage& mask) {
  std::vector<int> runs;
  uint8_t cur = 0;  // first run counts background pixels
  int len = 0;
  for (uint8_t v : mask.data) {
    uint8_t b = v ? 1 : 0;
    if (b == cur) {
      ++len;
    } else {
      runs.push_back(len);
      cur = b;
      len = 1;
    }
  }
  runs.push_back(len);
  return runs;
}

MaskImage rle_decode(const std::vector<int>& runs, int h, int w) {
  MaskImage mask(h, w, 1);
  size_t pos = 0;
  uint8_t cur = 0;
  for (int run : runs) {
    if (run < 0 || pos + size_t(run) > mask.data.size())
      throw Error(Err::invalid_input, "rle_decode: runs exceed mask size");
    for (int i = 0; i < run; ++i) mask.data[pos++] = cur;
    cur = cur ? 0 : 1;
  }
  if (pos != mask.data.size())
    throw Error(Err::invalid_input, "rle_decode: runs do not cover the mask");
  return mask;
}

}  // namespace mopd
