#pragma once

// Deterministic parallel replica driver. Work is cut into fixed-size chunks;
// each chunk owns an accumulator filled by exactly one worker, and chunk
// results are merged in index order afterwards. Results are therefore
// bit-identical for any worker count. FRAGRATE_THREADS caps the pool.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace fragrate {

inline unsigned worker_count() {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("FRAGRATE_THREADS")) {
        const long cap = std::atol(env);
        if (cap >= 1 && static_cast<unsigned>(cap) < n) n = static_cast<unsigned>(cap);
    }
    return n;
}

// body(acc, i) runs for every i in [0, n); join(acc) is called once per chunk
// in ascending chunk order on the calling thread.
template <typename Acc, typename Body, typename Join>
void run_replicas(std::uint64_t n, const Acc& init, Body body, Join join,
                  std::uint64_t chunk_size = 4096) {
    if (n == 0) return;
    const std::uint64_t n_chunks = (n + chunk_size - 1) / chunk_size;
    std::vector<Acc> accs(n_chunks, init);
    const unsigned workers = worker_count();
    if (workers <= 1 || n_chunks == 1) {
        for (std::uint64_t c = 0; c < n_chunks; ++c) {
            const std::uint64_t lo = c * chunk_size;
            const std::uint64_t hi = std::min(n, lo + chunk_size);
            for (std::uint64_t i = lo; i < hi; ++i) body(accs[c], i);
        }
    } else {
        std::atomic<std::uint64_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned t = 0; t < workers; ++t) {
            pool.emplace_back([&]() {
                for (;;) {
                    const std::uint64_t c = next.fetch_add(1);
                    if (c >= n_chunks) return;
                    const std::uint64_t lo = c * chunk_size;
                    const std::uint64_t hi = std::min(n, lo + chunk_size);
                    for (std::uint64_t i = lo; i < hi; ++i) body(accs[c], i);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    for (std::uint64_t c = 0; c < n_chunks; ++c) join(accs[c]);
}

} // namespace fragrate
