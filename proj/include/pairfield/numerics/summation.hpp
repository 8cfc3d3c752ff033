#pragma once

#include <cstddef>

namespace pairfield {

/// Pairwise (cascade) summation over a strided range. The reduction tree is a
/// function of the length only, never of thread count, so sums are bit-stable.
template <typename Access>
double pairwise_sum(const Access& at, std::size_t begin, std::size_t end) {
  const std::size_t len = end - begin;
  if (len <= 8) {
    double s = 0.0;
    for (std::size_t k = begin; k < end; ++k) s += at(k);
    return s;
  }
  const std::size_t mid = begin + len / 2;
  return pairwise_sum(at, begin, mid) + pairwise_sum(at, mid, end);
}

template <typename Vec>
double pairwise_sum(const Vec& v) {
  return pairwise_sum([&](std::size_t k) { return v[k]; }, 0,
                      static_cast<std::size_t>(v.size()));
}

}  // namespace pairfield
