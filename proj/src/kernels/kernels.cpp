#include "aprm/kernels.hpp"

#include "kernels_impl.hpp"

#include <cstdlib>
#include <string>

namespace aprm::kernels {

namespace {

constexpr KernelTable kScalar{Isa::scalar, "scalar", &scalar::dot, &scalar::axpy, &scalar::gemv,
                              &scalar::column_mean_std, &scalar::squared_distance};

#if defined(APRM_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::avx2, "avx2", &avx2::dot, &avx2::axpy, &avx2::gemv,
                            &avx2::column_mean_std, &avx2::squared_distance};
#endif

const KernelTable& select() {
    const char* env = std::getenv("APRM_KERNELS");
    const std::string forced = env ? env : "";
    if (forced == "scalar") return kScalar;
    if (const auto* t = table_for(Isa::avx2); t && (forced.empty() || forced == "avx2")) return *t;
    return kScalar;
}

} // namespace

bool cpu_supports(Isa isa) {
    switch (isa) {
    case Isa::scalar:
        return true;
    case Isa::avx2:
#if defined(APRM_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
        return false;
#endif
    }
    return false;
}

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* table_for(Isa isa) {
    if (!cpu_supports(isa)) return nullptr;
    switch (isa) {
    case Isa::scalar:
        return &kScalar;
    case Isa::avx2:
#if defined(APRM_HAVE_AVX2)
        return &kAvx2;
#else
        return nullptr;
#endif
    }
    return nullptr;
}

const KernelTable& active() {
    static const KernelTable& table = select();
    return table;
}

} // namespace aprm::kernels
