#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <vector>

namespace intradp {

using Units = std::int64_t;

/// Half-open contiguous range of unit indices [lo, hi).
struct UnitRange {
  Units lo = 0;
  Units hi = 0;

  constexpr Units size() const { return hi > lo ? hi - lo : 0; }
  constexpr bool empty() const { return hi <= lo; }
  constexpr bool contains(Units i) const { return lo <= i && i < hi; }

  // An empty range is a subset of everything.
  constexpr bool subset_of(const UnitRange& o) const {
    return empty() || (o.lo <= lo && hi <= o.hi);
  }

  friend constexpr bool operator==(const UnitRange& a, const UnitRange& b) {
    if (a.empty() && b.empty()) return true;
    return a.lo == b.lo && a.hi == b.hi;
  }

  friend std::ostream& operator<<(std::ostream& os, const UnitRange& r) {
    return os << '[' << r.lo << ',' << r.hi << ')';
  }
};

constexpr UnitRange intersect(const UnitRange& a, const UnitRange& b) {
  UnitRange r{std::max(a.lo, b.lo), std::min(a.hi, b.hi)};
  if (r.hi < r.lo) r.hi = r.lo;
  return r;
}

// Set difference a \ b as at most two contiguous pieces (empty pieces dropped).
inline std::vector<UnitRange> subtract(const UnitRange& a, const UnitRange& b) {
  std::vector<UnitRange> out;
  if (a.empty()) return out;
  const UnitRange mid = intersect(a, b);
  if (mid.empty()) {
    out.push_back(a);
    return out;
  }
  if (a.lo < mid.lo) out.push_back({a.lo, mid.lo});
  if (mid.hi < a.hi) out.push_back({mid.hi, a.hi});
  return out;
}

inline Units total_size(const std::vector<UnitRange>& rs) {
  Units n = 0;
  for (const auto& r : rs) n += r.size();
  return n;
}

}  // namespace intradp
