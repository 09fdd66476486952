#ifndef REGIONAL_PARALLEL_HPP
#define REGIONAL_PARALLEL_HPP

// Minimal fork-join helpers. Work is split into chunks whose boundaries depend
// only on the problem size, never on the thread count, and partial results are
// combined in chunk order. Results are therefore bit-identical for any number
// of threads.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace regional {

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> threads{1};
  return threads;
}
inline thread_local bool in_worker = false;
}  // namespace detail

inline void set_num_threads(unsigned k) { detail::thread_setting() = std::max(1u, k); }
inline unsigned num_threads() { return detail::thread_setting().load(); }

// Calls body(i) for i in [0, count). Nested calls from inside a worker run
// serially on the calling thread.
template <class Body>
void parallel_for(std::size_t count, Body&& body) {
  const unsigned threads = num_threads();
  if (threads <= 1 || count <= 1 || detail::in_worker) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    detail::in_worker = true;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) break;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
    detail::in_worker = false;
  };
  const auto spawn = std::min<std::size_t>(threads, count);
  std::vector<std::jthread> pool;
  pool.reserve(spawn - 1);
  for (std::size_t t = 1; t < spawn; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

inline constexpr std::size_t kReductionChunk = 64;

// Deterministic sum of term(i) over [0, count).
template <class Term>
double parallel_sum(std::size_t count, Term&& term) {
  const std::size_t chunks = (count + kReductionChunk - 1) / kReductionChunk;
  std::vector<double> partial(chunks, 0.0);
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t lo = c * kReductionChunk;
    const std::size_t hi = std::min(count, lo + kReductionChunk);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += term(i);
    partial[c] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

// Elementwise map into a preallocated output, chunked like parallel_sum.
template <class Body>
void parallel_chunks(std::size_t count, Body&& body) {
  const std::size_t chunks = (count + kReductionChunk - 1) / kReductionChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t lo = c * kReductionChunk;
    const std::size_t hi = std::min(count, lo + kReductionChunk);
    for (std::size_t i = lo; i < hi; ++i) body(i);
  });
}

}  // namespace regional

#endif  // REGIONAL_PARALLEL_HPP
