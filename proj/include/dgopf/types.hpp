// Common dense types and small utilities shared across the library.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dgopf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Error with a human-readable location (file/row/JSON pointer) baked in.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Runs fn(i) for i in [0, n), split statically over `threads` workers.
/// threads <= 1 runs inline. Each index writes only its own slot, so the
/// result is independent of the schedule.
inline void parallel_for(Index n, int threads,
                         const std::function<void(Index)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  const int nw = static_cast<int>(std::min<Index>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(nw);
  for (int w = 0; w < nw; ++w) {
    pool.emplace_back([&, w] {
      for (Index i = w; i < n; i += nw) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace dgopf
