#ifndef BOOSTLORA_PARALLEL_HPP
#define BOOSTLORA_PARALLEL_HPP

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

#include "boostlora/linalg.hpp"

namespace boostlora {

/// Chunk width for parallel maps and reductions. Fixed, never derived from
/// the worker count, so per-chunk partial results (and any fold over them in
/// chunk order) are bit-identical for 1 or N threads.
inline constexpr Index kParallelChunk = 256;

inline Index chunk_count(Index n) { return (n + kParallelChunk - 1) / kParallelChunk; }

/// Runs fn(chunk_index, begin, end) over [0, n) split into kParallelChunk
/// slices. Workers pull chunks from a shared counter; fn must only write
/// state owned by its chunk.
inline void parallel_chunks(Index n, int threads,
                            const std::function<void(Index, Index, Index)>& fn) {
    const Index chunks = chunk_count(n);
    if (chunks == 0) {
        return;
    }
    auto run_chunk = [&](Index c) {
        const Index begin = c * kParallelChunk;
        const Index end = std::min(n, begin + kParallelChunk);
        fn(c, begin, end);
    };
    if (threads <= 1 || chunks == 1) {
        for (Index c = 0; c < chunks; ++c) {
            run_chunk(c);
        }
        return;
    }
    std::atomic<Index> next{0};
    const int workers = static_cast<int>(std::min<Index>(threads, chunks));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (Index c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) {
                run_chunk(c);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
}

} // namespace boostlora

#endif // BOOSTLORA_PARALLEL_HPP
