#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace zdiff::detail {

// [begin, end) index ranges covering n items in chunks of batch_size. A
// trailing chunk smaller than min_batch is merged into its predecessor.
inline std::vector<std::pair<std::size_t, std::size_t>> make_batches(std::size_t n,
                                                                     std::size_t batch_size,
                                                                     std::size_t min_batch = 1) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size) out.emplace_back(b, std::min(n, b + batch_size));
  if (out.size() > 1 && out.back().second - out.back().first < min_batch) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

}  // namespace zdiff::detail
