#pragma once

// Dense kernels behind the autograd tape.
//
// Every kernel exists twice: `serial::` is the plain reference loop nest and
// `parallel::` splits the outermost output dimension across OpenMP threads.
// Both call the same per-row body, so each output element is accumulated in
// the same order and the two paths agree bit for bit. The unqualified
// functions dispatch on problem size and the global thread switch.

#include <cstddef>

#include "relcp/matrix.hpp"

namespace relcp::kernels {

/// Enables or disables the OpenMP path globally (default: enabled).
void set_parallel(bool enabled) noexcept;
[[nodiscard]] bool parallel_enabled() noexcept;
[[nodiscard]] int max_threads() noexcept;

namespace serial {
/// C += A * B      A: m x k, B: k x n, C: m x n
template <typename S>
void gemm_nn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n);
/// C += A^T * B    A: m x k, B: m x n, C: k x n
template <typename S>
void gemm_tn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n);
/// out[j] += sum_i A[i, j]
template <typename S>
void colsum(const S* a, S* out, std::size_t m, std::size_t n);
}  // namespace serial

namespace parallel {
template <typename S>
void gemm_nn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n);
template <typename S>
void gemm_tn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n);
template <typename S>
void colsum(const S* a, S* out, std::size_t m, std::size_t n);
}  // namespace parallel

template <typename S>
void gemm_nn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n);
template <typename S>
void gemm_tn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n);
template <typename S>
void colsum(const S* a, S* out, std::size_t m, std::size_t n);

/// C = A * B (allocating convenience wrapper).
template <typename S>
Matrix<S> matmul(const Matrix<S>& a, const Matrix<S>& b);

}  // namespace relcp::kernels
