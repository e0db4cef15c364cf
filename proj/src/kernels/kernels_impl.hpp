#pragma once

#include <cstddef>

namespace aprm::kernels::scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemv(const double* w, const double* bias, const double* x, double* out, std::size_t rows, std::size_t cols);
void column_mean_std(const double* m, std::size_t rows, std::size_t cols, double* mean, double* std);
double squared_distance(const double* a, const double* b, std::size_t n);
} // namespace aprm::kernels::scalar

#if defined(APRM_HAVE_AVX2)
namespace aprm::kernels::avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemv(const double* w, const double* bias, const double* x, double* out, std::size_t rows, std::size_t cols);
void column_mean_std(const double* m, std::size_t rows, std::size_t cols, double* mean, double* std);
double squared_distance(const double* a, const double* b, std::size_t n);
} // namespace aprm::kernels::avx2
#endif
