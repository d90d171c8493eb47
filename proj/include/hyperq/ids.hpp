#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>

namespace hyperq {

/// Dense integer handle, tagged so entity and relation ids cannot be mixed.
template <class Tag>
struct Id {
  std::uint32_t value = 0;

  constexpr Id() = default;
  constexpr explicit Id(std::uint32_t v) : value(v) {}

  constexpr auto operator<=>(const Id&) const = default;
  constexpr std::size_t index() const { return value; }
};

struct EntityTag {};
struct RelationTag {};

using EntityId = Id<EntityTag>;
using RelationId = Id<RelationTag>;

enum class Split : std::uint8_t { Train = 0, Validation = 1, Test = 2 };

inline constexpr Split kAllSplits[] = {Split::Train, Split::Validation, Split::Test};

const char* to_string(Split s);
Split split_from_string(const char* s);

/// Bit set over the three split tags.
class SplitSet {
 public:
  constexpr SplitSet() = default;
  constexpr SplitSet(std::initializer_list<Split> splits) {
    for (Split s : splits) bits_ |= bit(s);
  }
  static constexpr SplitSet all() { return {Split::Train, Split::Validation, Split::Test}; }
  /// Splits strictly before and including `s` in train < validation < test order.
  static constexpr SplitSet up_to(Split s) {
    SplitSet out;
    for (Split x : kAllSplits)
      if (x <= s) out.bits_ |= bit(x);
    return out;
  }

  constexpr bool contains(Split s) const { return (bits_ & bit(s)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool operator==(const SplitSet&) const = default;

 private:
  static constexpr std::uint8_t bit(Split s) { return std::uint8_t(1u << static_cast<unsigned>(s)); }
  std::uint8_t bits_ = 0;
};

// 64-bit FNV-1a, used wherever a stable, platform-independent digest is needed.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace hyperq

template <class Tag>
struct std::hash<hyperq::Id<Tag>> {
  std::size_t operator()(const hyperq::Id<Tag>& id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};
