#pragma once

#include <cstddef>
#include <functional>

namespace octs {

// Number of worker threads used by parallel_for. 0 selects the hardware
// concurrency.
unsigned thread_count();
void set_thread_count(unsigned n);

// RAII override of the worker count, restored on scope exit.
class ScopedThreadCount {
public:
  explicit ScopedThreadCount(unsigned n);
  ~ScopedThreadCount();
  ScopedThreadCount(const ScopedThreadCount&) = delete;
  ScopedThreadCount& operator=(const ScopedThreadCount&) = delete;

private:
  unsigned previous_;
};

// Runs body(i) for i in [0, count). Work items are handed out dynamically,
// so callers must make each item's result independent of which worker runs
// it. The first exception thrown by any item is rethrown on the caller.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

} // namespace octs
