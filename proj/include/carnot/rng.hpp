#ifndef CARNOT_RNG_HPP
#define CARNOT_RNG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace carnot {

// splitmix64; used to derive independent per-shard seeds from (master, index).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t shard_seed(std::uint64_t master, std::uint64_t shard) {
    return splitmix64(master ^ splitmix64(shard + 0x51ed270b9ULL));
}

// Fixed shard count, independent of the worker count, so results are
// bit-identical for any --threads value. Partial results land in a
// preallocated slot per shard and are reduced in shard order.
class ShardedRuns {
public:
    ShardedRuns(std::uint64_t master_seed, std::size_t n_items, std::size_t items_per_shard = 4096)
        : master_(master_seed), n_items_(n_items),
          n_shards_((n_items + items_per_shard - 1) / std::max<std::size_t>(1, items_per_shard)),
          per_shard_(items_per_shard) {
        if (n_shards_ == 0) n_shards_ = 1;
    }

    std::size_t shards() const { return n_shards_; }

    // fn(shard_index, rng, first_item, last_item)
    void run(unsigned threads,
             const std::function<void(std::size_t, std::mt19937_64&, std::size_t, std::size_t)>& fn) const {
        if (threads <= 1 || n_shards_ == 1) {
            for (std::size_t s = 0; s < n_shards_; ++s) run_shard(s, fn);
            return;
        }
        std::vector<std::thread> pool;
        std::size_t next = 0;
        std::mutex mtx;
        auto worker = [&]() {
            for (;;) {
                std::size_t s;
                {
                    std::lock_guard<std::mutex> lk(mtx);
                    if (next >= n_shards_) return;
                    s = next++;
                }
                run_shard(s, fn);
            }
        };
        unsigned nw = std::min<unsigned>(threads, static_cast<unsigned>(n_shards_));
        pool.reserve(nw);
        for (unsigned w = 0; w < nw; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

private:
    void run_shard(std::size_t s,
                   const std::function<void(std::size_t, std::mt19937_64&, std::size_t, std::size_t)>& fn) const {
        std::mt19937_64 rng(shard_seed(master_, s));
        std::size_t first = s * per_shard_;
        std::size_t last = std::min(n_items_, first + per_shard_);
        fn(s, rng, first, last);
    }

    std::uint64_t master_;
    std::size_t n_items_;
    std::size_t n_shards_;
    std::size_t per_shard_;
};

// Neumaier compensated sum; reduction order is fixed by the caller.
class CompensatedSum {
public:
    void add(double v) {
        double t = s_ + v;
        if (std::abs(s_) >= std::abs(v))
            c_ += (s_ - t) + v;
        else
            c_ += (v - t) + s_;
        s_ = t;
    }
    double value() const { return s_ + c_; }

private:
    double s_ = 0.0, c_ = 0.0;
};

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::uint64_t n = 0;
};

}  // namespace carnot

#endif
