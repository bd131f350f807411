#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tsam/data/triple_store.hpp"

namespace tsam::data {

/// One epoch's shuffled pass over a triple list, cut into batches of
/// `batch_size` (the final batch may be shorter).
class BatchPlan {
 public:
  BatchPlan(std::span<const Triple> triples, std::size_t batch_size, std::uint64_t shuffle_seed);

  std::size_t size() const { return (order_.size() + batch_size_ - 1) / batch_size_; }
  std::span<const Triple> batch(std::size_t i) const;
  std::span<const Triple> order() const { return order_; }

 private:
  std::vector<Triple> order_;
  std::size_t batch_size_;
};

// Throws ConfigError when batch_size < 2.
BatchPlan batch_iter(const TripleStore& store, Split split, std::size_t batch_size, std::uint64_t shuffle_seed);

}  // namespace tsam::data
