#pragma once

#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace momo {

/// Execution policy for the batched kernels. Every kernel has a serial
/// reference path and an OpenMP path over the same fixed block
/// decomposition; because partial results are combined in block order, the
/// two paths produce bit-identical results (tested in test_parallel.cpp).
enum class Exec { Serial, OpenMP };

inline Exec& default_exec_slot() {
#ifdef _OPENMP
  static Exec e = Exec::OpenMP;
#else
  static Exec e = Exec::Serial;
#endif
  return e;
}

inline Exec default_exec() { return default_exec_slot(); }
inline void set_default_exec(Exec e) { default_exec_slot() = e; }

/// Batch columns are split into blocks of this many samples. The block
/// structure depends only on the batch size, never on the thread count, so
/// reductions over blocks are deterministic.
inline constexpr int kBatchBlock = 32;

struct BlockRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
};

inline std::vector<BlockRange> split_blocks(int n, int block = kBatchBlock) {
  std::vector<BlockRange> out;
  if (n <= 0) return out;
  out.reserve(static_cast<size_t>((n + block - 1) / block));
  for (int b = 0; b < n; b += block)
    out.push_back({b, b + block < n ? b + block : n});
  return out;
}

/// Runs body(block_index) for every block. The OpenMP path captures the
/// first exception thrown inside the region and rethrows it afterwards.
template <typename F>
void for_each_block(int nblocks, Exec exec, F&& body) {
  if (exec == Exec::Serial || nblocks <= 1) {
    for (int b = 0; b < nblocks; ++b) body(b);
    return;
  }
#ifdef _OPENMP
  std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < nblocks; ++b) {
    try {
      body(b);
    } catch (...) {
#pragma omp critical(momo_for_each_block_err)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
#else
  for (int b = 0; b < nblocks; ++b) body(b);
#endif
}

}  // namespace momo
