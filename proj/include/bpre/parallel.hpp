#pragma once

// Deterministic fan-out over Monte Carlo trials.
//
// Trials are cut into fixed-size blocks independent of the worker count.
// Each block is reduced sequentially by whichever worker claims it and the
// per-block partials come back in block order, so any further reduction done
// by the caller is bit-identical for 1 or W workers.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace bpre {

struct ExecPolicy {
  unsigned workers = 1;
  std::uint64_t block_size = 1024;
};

inline unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// fn(first_trial, end_trial) -> Partial, called once per block.
template <class Partial, class BlockFn>
std::vector<Partial> run_blocks(std::uint64_t trials, const ExecPolicy& exec, BlockFn&& fn) {
  const std::uint64_t block = std::max<std::uint64_t>(1, exec.block_size);
  const std::uint64_t blocks = (trials + block - 1) / block;
  std::vector<Partial> partials(blocks);
  std::vector<std::exception_ptr> errors(blocks);
  std::atomic<std::uint64_t> next{0};

  auto work = [&] {
    for (std::uint64_t b = next++; b < blocks; b = next++) {
      try {
        const std::uint64_t first = b * block;
        partials[b] = fn(first, std::min(trials, first + block));
      } catch (...) {
        errors[b] = std::current_exception();
      }
    }
  };

  const unsigned workers = static_cast<unsigned>(std::min<std::uint64_t>(std::max(1u, exec.workers), blocks));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return partials;
}

}  // namespace bpre
