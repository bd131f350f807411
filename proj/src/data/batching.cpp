#include "tsam/data/batching.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "tsam/error.hpp"

namespace tsam::data {

BatchPlan::BatchPlan(std::span<const Triple> triples, std::size_t batch_size, std::uint64_t shuffle_seed)
    : order_(triples.begin(), triples.end()), batch_size_(batch_size) {
  if (batch_size < 2) {
    throw ConfigError("batch_size must be at least 2 for in-batch negatives, got " + std::to_string(batch_size));
  }
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order_.begin(), order_.end(), rng);
}

std::span<const Triple> BatchPlan::batch(std::size_t i) const {
  const std::size_t begin = i * batch_size_;
  const std::size_t end = std::min(order_.size(), begin + batch_size_);
  return std::span<const Triple>(order_).subspan(begin, end - begin);
}

BatchPlan batch_iter(const TripleStore& store, Split split, std::size_t batch_size, std::uint64_t shuffle_seed) {
  return BatchPlan(store.split(split), batch_size, shuffle_seed);
}

}  // namespace tsam::data
