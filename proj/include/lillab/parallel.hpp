#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lillab::parallel {

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

// Runs work(item) for item in [0, n) split into fixed-size chunks, each chunk
// producing one Partial, then folds chunk results strictly in chunk order.
//
// The chunk size is a constant independent of the thread count, so the
// floating-point reduction tree (sequential within a chunk, sequential across
// chunks) is identical under 1, 4, or 8 threads. That is what makes reports
// byte-identical regardless of scheduling.
template <class Partial, class Work, class Fold>
Partial chunked_reduce(std::size_t n_items, unsigned threads, Work work,
                       Fold fold, Partial init,
                       std::size_t chunk_size = 32) {
  if (n_items == 0) return init;
  const std::size_t n_chunks = (n_items + chunk_size - 1) / chunk_size;
  std::vector<Partial> partials(n_chunks);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error = nullptr;
  std::mutex error_mu;

  auto runner = [&]() {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      const std::size_t lo = c * chunk_size;
      const std::size_t hi = lo + chunk_size < n_items ? lo + chunk_size : n_items;
      try {
        Partial acc{};
        for (std::size_t i = lo; i < hi; ++i) work(i, acc);
        partials[c] = std::move(acc);
      } catch (...) {
        std::lock_guard<std::mutex> g(error_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const unsigned n_threads = resolve_threads(threads);
  if (n_threads <= 1 || n_chunks == 1) {
    runner();
  } else {
    std::vector<std::thread> pool;
    const unsigned spawn = n_threads < n_chunks ? n_threads : static_cast<unsigned>(n_chunks);
    pool.reserve(spawn);
    for (unsigned t = 0; t < spawn; ++t) pool.emplace_back(runner);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  Partial total = std::move(init);
  for (std::size_t c = 0; c < n_chunks; ++c) fold(total, partials[c]);
  return total;
}

}  // namespace lillab::parallel
