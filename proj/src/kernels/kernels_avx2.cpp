#include "kernels_impl.hpp"

#include <immintrin.h>

#include <cmath>

// Compiled with -mavx2 -mfma -ffp-contract=off. Reductions (dot, gemv, squared_distance)
// use four lane-wise partial sums, so they differ from the scalar reference by
// reassociation only. axpy and column_mean_std keep the scalar operation order per
// element and are bit-identical to it.

namespace aprm::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

} // namespace

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    if (i + 4 <= n) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        i += 4;
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv(const double* w, const double* bias, const double* x, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) out[r] = (bias ? bias[r] : 0.0) + dot(w + r * cols, x, cols);
}

void column_mean_std(const double* m, std::size_t rows, std::size_t cols, double* mean, double* std) {
    const double inv = 1.0 / static_cast<double>(rows);
    const __m256d vinv = _mm256_set1_pd(inv);
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
        const __m256d pivot = _mm256_loadu_pd(m + c);
        __m256d s = _mm256_setzero_pd();
        for (std::size_t r = 1; r < rows; ++r) s = _mm256_add_pd(s, _mm256_sub_pd(_mm256_loadu_pd(m + r * cols + c), pivot));
        const __m256d mu = _mm256_add_pd(pivot, _mm256_mul_pd(s, vinv));
        __m256d v = _mm256_setzero_pd();
        for (std::size_t r = 0; r < rows; ++r) {
            const __m256d dlt = _mm256_sub_pd(_mm256_loadu_pd(m + r * cols + c), mu);
            v = _mm256_add_pd(v, _mm256_mul_pd(dlt, dlt));
        }
        _mm256_storeu_pd(mean + c, mu);
        _mm256_storeu_pd(std + c, _mm256_sqrt_pd(_mm256_mul_pd(v, vinv)));
    }
    for (; c < cols; ++c) {
        const double pivot = m[c];
        double s = 0.0;
        for (std::size_t r = 1; r < rows; ++r) s += m[r * cols + c] - pivot;
        const double mu = pivot + s * inv;
        double v = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const double dlt = m[r * cols + c] - mu;
            v += dlt * dlt;
        }
        mean[c] = mu;
        std[c] = std::sqrt(v * inv);
    }
}

double squared_distance(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d dlt = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_fmadd_pd(dlt, dlt, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double dlt = a[i] - b[i];
        s += dlt * dlt;
    }
    return s;
}

} // namespace aprm::kernels::avx2
