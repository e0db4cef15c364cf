#pragma once

// Dense inner loops used by the scorer and the ensemble statistics. Every kernel has a
// portable scalar reference; an AVX2 variant is compiled when the toolchain supports it
// and picked at runtime when the CPU does. APRM_KERNELS=scalar|avx2 forces a choice.

#include <cstddef>
#include <span>
#include <string_view>

namespace aprm::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
    Isa isa;
    std::string_view name;

    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // out[r] = bias[r] + sum_c w[r * cols + c] * x[c]; bias may be null.
    void (*gemv)(const double* w, const double* bias, const double* x, double* out, std::size_t rows, std::size_t cols);
    // Per column of a row-major rows x cols matrix: mean and population std over the rows.
    void (*column_mean_std)(const double* m, std::size_t rows, std::size_t cols, double* mean, double* std);
    double (*squared_distance)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table();
// Null when the variant was not compiled in or the CPU lacks the instructions.
const KernelTable* table_for(Isa isa);
bool cpu_supports(Isa isa);

// Selected once per process.
const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    return active().squared_distance(a.data(), b.data(), a.size());
}

} // namespace aprm::kernels
