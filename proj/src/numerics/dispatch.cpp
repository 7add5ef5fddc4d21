#include <atomic>
#include <cstdlib>
#include <string>

#include "noisesteer/errors.hpp"
#include "noisesteer/numerics/kernels.hpp"

namespace noisesteer::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& table_for(Backend b) {
#if defined(__x86_64__) || defined(_M_X64)
  if (b == Backend::avx2) return avx2_table();
#endif
  return scalar_table();
}

// NOISESTEER_KERNELS=scalar forces the reference path for a whole process.
Backend initial_backend() {
  if (const char* env = std::getenv("NOISESTEER_KERNELS")) {
    if (std::string(env) == "scalar") return Backend::scalar;
  }
  return best_backend();
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{initial_backend()};
  return b;
}

}  // namespace

bool backend_available(Backend b) {
  if (b == Backend::scalar) return true;
  static const bool avx2 = cpu_has_avx2();
  return avx2;
}

Backend best_backend() { return backend_available(Backend::avx2) ? Backend::avx2 : Backend::scalar; }

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_available(b)) {
    throw ConfigError("kernel backend '" + std::string(backend_name(b)) + "' is not supported on this CPU");
  }
  current().store(b, std::memory_order_relaxed);
}

std::string_view backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

const KernelTable& active() { return table_for(active_backend()); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw ShapeError("axpy: length mismatch");
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace noisesteer::kernels
