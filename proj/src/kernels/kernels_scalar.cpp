#include "kernels_impl.hpp"

#include <cmath>

namespace aprm::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv(const double* w, const double* bias, const double* x, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) out[r] = (bias ? bias[r] : 0.0) + dot(w + r * cols, x, cols);
}

void column_mean_std(const double* m, std::size_t rows, std::size_t cols, double* mean, double* std) {
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t c = 0; c < cols; ++c) {
        // Sums run on deviations from row 0, so identical rows give sigma == 0 exactly.
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
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dlt = a[i] - b[i];
        s += dlt * dlt;
    }
    return s;
}

} // namespace aprm::kernels::scalar
