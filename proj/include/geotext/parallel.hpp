#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace geotext {

/// OpenMP loop over [0, n) that is safe for throwing bodies: exceptions may
/// not cross a parallel region, so each is caught and the one from the
/// lowest index is rethrown afterwards (the same error a serial loop reports).
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  bool failed = false;
#pragma omp parallel for schedule(dynamic) reduction(|| : failed)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
      failed = true;
    }
  }
  if (!failed) return;
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace geotext
