#pragma once

#include <vector>

#include <Eigen/Core>

namespace cdasr {

// Storage for anything Eigen maps over. Vectorized reductions peel off an
// unaligned head, so the same data at a different address can round
// differently; fixing the alignment keeps results independent of heap layout.
template <class T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

} // namespace cdasr
