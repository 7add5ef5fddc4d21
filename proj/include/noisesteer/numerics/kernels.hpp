#pragma once
// Dense linear-algebra inner loops used by every network evaluation.
//
// Each kernel has a scalar reference implementation and, on x86-64 hosts that
// report AVX2+FMA at runtime, a vectorized variant. The active backend is
// chosen once at startup and may be overridden (tests pin both backends and
// compare them). Results of the two backends agree to rounding, not bitwise:
// the vector variants use fused multiply-add and a different summation order.
// Within one backend every kernel is deterministic.

#include <cstddef>
#include <span>
#include <string_view>

namespace noisesteer::kernels {

enum class Backend { scalar, avx2 };

/// Kernel table. All pointers are non-null for every available backend.
struct KernelTable {
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = W x + bias (bias may be null). W is rows x cols, row-major.
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x, const double* bias,
               double* y);
  // out += W^T g
  void (*gemv_t)(const double* w, std::size_t rows, std::size_t cols, const double* g, double* out);
  // G += g x^T
  void (*ger)(double* G, std::size_t rows, std::size_t cols, const double* g, const double* x);
};

const KernelTable& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif

bool backend_available(Backend b);
/// Best backend supported by the running CPU.
Backend best_backend();
Backend active_backend();
/// Throws ConfigError if `b` is not available on this host.
void set_backend(Backend b);
std::string_view backend_name(Backend b);

const KernelTable& active();

// Convenience wrappers over the active table.
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// Restores the previously active backend on scope exit.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : previous_(active_backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

}  // namespace noisesteer::kernels
