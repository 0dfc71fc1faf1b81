#include "relcp/kernels.hpp"

#include <atomic>
#include <stdexcept>

#include <omp.h>

namespace relcp::kernels {

namespace {

std::atomic<bool> g_parallel{true};

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelThreshold = 1u << 16;

template <typename S>
inline void nn_row(const S* a_row, const S* b, S* c_row, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const S av = a_row[p];
    if (av == S(0)) continue;
    const S* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

// Row p of A^T * B: accumulate over the shared dimension in increasing i.
template <typename S>
inline void tn_row(const S* a, const S* b, S* c_row, std::size_t p, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const S av = a[i * k + p];
    if (av == S(0)) continue;
    const S* b_row = b + i * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

template <typename S>
inline void colsum_col(const S* a, S* out, std::size_t j, std::size_t m, std::size_t n) {
  S acc = S(0);
  for (std::size_t i = 0; i < m; ++i) acc += a[i * n + j];
  out[j] += acc;
}

bool use_parallel(std::size_t work) {
  return g_parallel.load(std::memory_order_relaxed) && work >= kParallelThreshold &&
         omp_get_max_threads() > 1;
}

}  // namespace

void set_parallel(bool enabled) noexcept { g_parallel.store(enabled); }
bool parallel_enabled() noexcept { return g_parallel.load(); }
int max_threads() noexcept { return omp_get_max_threads(); }

namespace serial {

template <typename S>
void gemm_nn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) nn_row(a + i * k, b, c + i * n, k, n);
}

template <typename S>
void gemm_tn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) tn_row(a, b, c + p * n, p, m, k, n);
}

template <typename S>
void colsum(const S* a, S* out, std::size_t m, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) colsum_col(a, out, j, m, n);
}

}  // namespace serial

namespace parallel {

template <typename S>
void gemm_nn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) nn_row(a + i * k, b, c + i * n, k, n);
}

template <typename S>
void gemm_tn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < rows; ++p) tn_row(a, b, c + p * n, p, m, k, n);
}

template <typename S>
void colsum(const S* a, S* out, std::size_t m, std::size_t n) {
  const auto cols = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < cols; ++j) colsum_col(a, out, j, m, n);
}

}  // namespace parallel

template <typename S>
void gemm_nn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n))
    parallel::gemm_nn(a, b, c, m, k, n);
  else
    serial::gemm_nn(a, b, c, m, k, n);
}

template <typename S>
void gemm_tn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n))
    parallel::gemm_tn(a, b, c, m, k, n);
  else
    serial::gemm_tn(a, b, c, m, k, n);
}

template <typename S>
void colsum(const S* a, S* out, std::size_t m, std::size_t n) {
  if (use_parallel(m * n))
    parallel::colsum(a, out, m, n);
  else
    serial::colsum(a, out, m, n);
}

template <typename S>
Matrix<S> matmul(const Matrix<S>& a, const Matrix<S>& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(a) + " * " + shape_str(b));
  }
  Matrix<S> c(a.rows(), b.cols());
  gemm_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

#define RELCP_INSTANTIATE(S)                                                                     \
  template void serial::gemm_nn<S>(const S*, const S*, S*, std::size_t, std::size_t,             \
                                   std::size_t);                                                 \
  template void serial::gemm_tn<S>(const S*, const S*, S*, std::size_t, std::size_t,             \
                                   std::size_t);                                                 \
  template void serial::colsum<S>(const S*, S*, std::size_t, std::size_t);                       \
  template void parallel::gemm_nn<S>(const S*, const S*, S*, std::size_t, std::size_t,           \
                                     std::size_t);                                               \
  template void parallel::gemm_tn<S>(const S*, const S*, S*, std::size_t, std::size_t,           \
                                     std::size_t);                                               \
  template void parallel::colsum<S>(const S*, S*, std::size_t, std::size_t);                     \
  template void gemm_nn<S>(const S*, const S*, S*, std::size_t, std::size_t, std::size_t);       \
  template void gemm_tn<S>(const S*, const S*, S*, std::size_t, std::size_t, std::size_t);       \
  template void colsum<S>(const S*, S*, std::size_t, std::size_t);                               \
  template Matrix<S> matmul<S>(const Matrix<S>&, const Matrix<S>&);

RELCP_INSTANTIATE(float)
RELCP_INSTANTIATE(double)

#undef RELCP_INSTANTIATE

}  // namespace relcp::kernels
