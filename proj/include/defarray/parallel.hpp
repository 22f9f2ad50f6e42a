// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <exception>
#include <mutex>

namespace defarray {

/// Exceptions must not escape an OpenMP region; loop bodies run through
/// capture() and the first exception is rethrown after the region.
class ExceptionCollector {
 public:
  template <class F>
  void capture(F&& body) noexcept {
    try {
      body();
    } catch (...) {
      std::lock_guard<std::mutex> lock(mutex_);
      if (!first_) first_ = std::current_exception();
    }
  }

  void rethrow() const {
    if (first_) std::rethrow_exception(first_);
  }

 private:
  std::mutex mutex_;
  std::exception_ptr first_;
};

}  // namespace defarray
