#pragma once

// Fixed-point kernels. The native path mirrors the VM's integer semantics
// exactly: products are widened to 64 bits, accumulated with wrapping
// addition, and rescaled by a single arithmetic shift at the end. Only bits
// 16..47 of the accumulator reach the result, so any summation order and any
// 64-bit wraparound give identical outputs.

#include <opml/ml/tensor.hpp>

#include <algorithm>
#include <thread>

namespace opml::ml {

inline constexpr std::uint32_t kMaxInnerDim = 1u << 14;

namespace detail {

inline std::uint64_t widened_product(std::int32_t a, std::int32_t b) {
  return static_cast<std::uint64_t>(static_cast<std::int64_t>(a) * static_cast<std::int64_t>(b));
}

inline std::int32_t rescale(std::uint64_t acc) {
  return static_cast<std::int32_t>(static_cast<std::uint32_t>(acc >> FixedTensor::frac));
}

inline void check_matmul(const FixedTensor& a, const FixedTensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul operands must be rank 2");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul inner dimensions differ: " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
  }
  if (a.cols() > kMaxInnerDim) throw ShapeError("matmul inner dimension exceeds 2^14");
}

inline void matmul_rows(const FixedTensor& a, const FixedTensor& b, FixedTensor& c, std::uint32_t row_begin,
                        std::uint32_t row_end) {
  const std::uint32_t n = a.cols();
  const std::uint32_t k = b.cols();
  for (std::uint32_t i = row_begin; i < row_end; ++i) {
    for (std::uint32_t j = 0; j < k; ++j) {
      std::uint64_t acc = 0;
      for (std::uint32_t h = 0; h < n; ++h) acc += widened_product(a.data[i * n + h], b.data[h * k + j]);
      c.data[i * k + j] = rescale(acc);
    }
  }
}

}  // namespace detail

/// C[i,j] = wrap32((sum_h A[i,h] * B[h,j]) asr 16).
inline FixedTensor matmul_fx(const FixedTensor& a, const FixedTensor& b) {
  detail::check_matmul(a, b);
  FixedTensor c = FixedTensor::zeros({a.rows(), b.cols()});
  detail::matmul_rows(a, b, c, 0, a.rows());
  return c;
}

/// Same result as matmul_fx, but each dot product is reduced as independent
/// partial sums of `chunk` terms combined at the end.
inline FixedTensor matmul_fx_chunked(const FixedTensor& a, const FixedTensor& b, std::uint32_t chunk) {
  detail::check_matmul(a, b);
  if (chunk == 0) throw ShapeError("chunk size must be positive");
  const std::uint32_t n = a.cols();
  const std::uint32_t k = b.cols();
  FixedTensor c = FixedTensor::zeros({a.rows(), k});
  std::vector<std::uint64_t> partial;
  for (std::uint32_t i = 0; i < a.rows(); ++i) {
    for (std::uint32_t j = 0; j < k; ++j) {
      partial.clear();
      for (std::uint32_t h0 = 0; h0 < n; h0 += chunk) {
        std::uint64_t s = 0;
        // Reverse order inside each chunk as well.
        for (std::uint32_t h = std::min(n, h0 + chunk); h-- > h0;) s += detail::widened_product(a.data[i * n + h], b.data[h * k + j]);
        partial.push_back(s);
      }
      std::uint64_t acc = 0;
      for (auto it = partial.rbegin(); it != partial.rend(); ++it) acc += *it;
      c.data[i * k + j] = detail::rescale(acc);
    }
  }
  return c;
}

/// Row-parallel matmul_fx; bit-identical to the sequential kernel.
inline FixedTensor matmul_fx_parallel(const FixedTensor& a, const FixedTensor& b, unsigned threads) {
  detail::check_matmul(a, b);
  FixedTensor c = FixedTensor::zeros({a.rows(), b.cols()});
  threads = std::max(1u, std::min<unsigned>(threads, a.rows()));
  if (threads == 1) {
    detail::matmul_rows(a, b, c, 0, a.rows());
    return c;
  }
  std::vector<std::jthread> pool;
  const std::uint32_t per = (a.rows() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::uint32_t lo = t * per;
    const std::uint32_t hi = std::min(a.rows(), lo + per);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] { detail::matmul_rows(a, b, c, lo, hi); });
  }
  pool.clear();
  return c;
}

/// Y[r,c] = wrap32(X[r,c] + b[c]).
inline FixedTensor bias_add_fx(const FixedTensor& x, const FixedTensor& bias) {
  if (x.rank() != 2 || bias.rank() != 1) throw ShapeError("bias_add expects a rank-2 input and a rank-1 bias");
  if (bias.shape[0] != x.cols()) throw ShapeError("bias length does not match the last input dimension");
  FixedTensor y = x;
  const std::uint32_t d = x.cols();
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    y.data[i] = static_cast<std::int32_t>(static_cast<std::uint32_t>(x.data[i]) +
                                          static_cast<std::uint32_t>(bias.data[i % d]));
  }
  return y;
}

inline FixedTensor relu_fx(const FixedTensor& x) {
  FixedTensor y = x;
  for (auto& v : y.data) v = std::max(v, 0);
  return y;
}

/// Index of the maximum over the flattened tensor; lowest index wins ties.
inline std::uint32_t argmax(const FixedTensor& x) {
  std::uint32_t best = 0;
  for (std::uint32_t i = 1; i < x.data.size(); ++i) {
    if (x.data[i] > x.data[best]) best = i;
  }
  return best;
}

/// argmax as a graph value: shape [1], raw integer index (not scaled).
inline FixedTensor argmax_fx(const FixedTensor& x) {
  return FixedTensor({1}, {static_cast<std::int32_t>(argmax(x))});
}

}  // namespace opml::ml
