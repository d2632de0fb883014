#pragma once

// Deliberate defects that the verification suites must detect. Off by
// default; toggled only by tests and by `geohj verify --mutate`.

#include <atomic>
#include <stdexcept>
#include <string>
#include <string_view>

namespace geohj::fixture {

enum class Mutation : unsigned {
  None = 0,
  LegendreSign = 1u << 0,       // legendre returns -dL/dv
  SupergradientSign = 1u << 1,  // penalization supergradient returns +dL/dv
  DropReversal = 1u << 2,       // y-side lift uses +velocity instead of the reversed path
};

inline std::atomic<unsigned>& mutation_mask() {
  static std::atomic<unsigned> mask{0};
  return mask;
}

inline bool active(Mutation m) {
  return (mutation_mask().load(std::memory_order_relaxed) & static_cast<unsigned>(m)) != 0;
}

inline void enable(Mutation m) { mutation_mask().fetch_or(static_cast<unsigned>(m)); }
inline void clear() { mutation_mask().store(0); }

inline Mutation parse_mutation(std::string_view name) {
  if (name == "legendre_sign") return Mutation::LegendreSign;
  if (name == "supergradient_sign") return Mutation::SupergradientSign;
  if (name == "drop_reversal") return Mutation::DropReversal;
  throw std::invalid_argument("unknown mutation '" + std::string(name) + "'");
}

/// Enables a mutation for the lifetime of the guard.
class ScopedMutation {
 public:
  explicit ScopedMutation(Mutation m) : saved_(mutation_mask().load()) { enable(m); }
  ~ScopedMutation() { mutation_mask().store(saved_); }
  ScopedMutation(const ScopedMutation&) = delete;
  ScopedMutation& operator=(const ScopedMutation&) = delete;

 private:
  unsigned saved_;
};

}  // namespace geohj::fixture
