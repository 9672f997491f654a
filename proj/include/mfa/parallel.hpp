#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace mfa {

/// Calls fn(begin, end) over contiguous chunks of [0, n) on up to `workers`
/// threads. Each index is handled by exactly one call, so any fn that writes
/// only to its own indices gives the same result for every worker count.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  const std::size_t chunks = std::min<std::size_t>(std::max(workers, 1u), n);
  if (chunks <= 1) {
    if (n > 0) fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> threads;
  threads.reserve(chunks - 1);
  const std::size_t per = (n + chunks - 1) / chunks;
  for (std::size_t c = 1; c < chunks; ++c) {
    const std::size_t b = c * per;
    const std::size_t e = std::min(n, b + per);
    if (b < e) threads.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(std::size_t{0}, std::min(n, per));
}

}  // namespace mfa
