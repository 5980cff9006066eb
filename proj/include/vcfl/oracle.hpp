#pragma once

#include <atomic>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "vcfl/image.hpp"

namespace vcfl {

enum class OracleMode { Exact, Sample };

std::string_view to_string(OracleMode mode);
OracleMode parse_oracle_mode(std::string_view text);

/// Answers interventional queries about T for a presented image: either the
/// exact P(T=1 | man(I=i)) or a single sampled outcome of T.
class Oracle {
public:
  explicit Oracle(OracleMode mode) : mode_(mode) {}
  virtual ~Oracle() = default;
  Oracle(const Oracle&) = delete;
  Oracle& operator=(const Oracle&) = delete;

  OracleMode mode() const { return mode_; }

  double query(const BinaryImage& image) {
    ++queries_;
    return answer(image);
  }

  /// Answers in order. Human-backed oracles override this to batch work.
  virtual std::vector<double> query_batch(std::span<const BinaryImage> images) {
    std::vector<double> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(query(img));
    return out;
  }

  std::size_t queries() const { return queries_.load(); }

protected:
  virtual double answer(const BinaryImage& image) = 0;
  void count_queries(std::size_t n) { queries_ += n; }

private:
  OracleMode mode_;
  std::atomic<std::size_t> queries_{0};
};

}  // namespace vcfl
