#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace regmm {

template <class T, class F>
std::vector<T> parallel_map(std::size_t count, int jobs, F f) {
  std::vector<T> out(count);
  std::vector<std::exception_ptr> errors(count);
  auto run = [&](std::size_t worker, std::size_t stride) {
    for (std::size_t k = worker; k < count; k += stride) {
      try {
        out[k] = f(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t workers = jobs > 1 ? std::min<std::size_t>(static_cast<std::size_t>(jobs), count) : 1;
  if (workers <= 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w, workers);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace regmm
