#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace sdds {

// A reproducible random stream identified by a key path (seed, id, id, ...).
// Child streams are derived from the key alone, never from the parent's
// consumed state, so the numbers a child produces do not depend on how many
// variates the parent (or any sibling) has drawn.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : key_{seed} { reseed(); }

  RandomStream child(std::uint64_t id) const {
    RandomStream s;
    s.key_ = key_;
    s.key_.push_back(id);
    s.reseed();
    return s;
  }

  RandomStream child(std::initializer_list<std::uint64_t> ids) const {
    RandomStream s;
    s.key_ = key_;
    s.key_.insert(s.key_.end(), ids);
    s.reseed();
    return s;
  }

  const std::vector<std::uint64_t>& key() const { return key_; }

  std::mt19937_64& engine() { return engine_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal() { return normal_(engine_); }

  bool bernoulli(double q) { return uniform() < q; }

  // UniformRandomBitGenerator interface so the stream can feed std:: algorithms.
  using result_type = std::mt19937_64::result_type;
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

 private:
  RandomStream() = default;

  void reseed() {
    std::vector<std::uint32_t> words;
    words.reserve(2 * key_.size() + 1);
    words.push_back(static_cast<std::uint32_t>(key_.size()));
    for (auto k : key_) {
      words.push_back(static_cast<std::uint32_t>(k & 0xffffffffu));
      words.push_back(static_cast<std::uint32_t>(k >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    engine_.seed(seq);
    normal_.reset();
  }

  std::vector<std::uint64_t> key_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace sdds
