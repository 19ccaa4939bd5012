#include "nss/common.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nss {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::SingularShift: return "SingularShift";
    case ErrorCode::OverflowRisk: return "OverflowRisk";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SupportViolation: return "SupportViolation";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::AmbiguousClassification: return "AmbiguousClassification";
    case ErrorCode::ContourTouchesSpectrum: return "ContourTouchesSpectrum";
    case ErrorCode::DegenerateBilinearForm: return "DegenerateBilinearForm";
    case ErrorCode::UnresolvedOrder: return "UnresolvedOrder";
    case ErrorCode::StepTooCoarse: return "StepTooCoarse";
    case ErrorCode::PoleAtBasePoint: return "PoleAtBasePoint";
    case ErrorCode::QuadratureNotConverged: return "QuadratureNotConverged";
    case ErrorCode::NoCauchyDecay: return "NoCauchyDecay";
    case ErrorCode::TailNotConverged: return "TailNotConverged";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

unsigned thread_count() {
  if (const char* env = std::getenv("NSS_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace nss
