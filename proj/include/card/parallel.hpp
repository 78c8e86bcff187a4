#pragma once

#include <cstddef>
#include <exception>

#include <omp.h>

namespace card {

// OpenMP loop over [0, n) that forwards the first exception thrown by `fn`
// to the calling thread. Iterations must be independent.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  std::exception_ptr failure;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic) if (count > 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(card_parallel_failure)
      {
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
}

inline int max_threads() { return omp_get_max_threads(); }

}  // namespace card
