#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace picar {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CacheGeometry {
  std::uint64_t total_bytes = 0;
  std::uint64_t ways = 0;
  std::uint64_t line_bytes = 0;
  std::uint64_t page_bytes = 4096;

  std::uint64_t sets() const { return total_bytes / (ways * line_bytes); }
  std::uint64_t way_bytes() const { return total_bytes / ways; }

  /// Throws GeometryError unless every field is a power of two and sets >= 1.
  void validate() const;

  /// "512K,16,64" (size with optional K/M suffix, ways, line bytes).
  static CacheGeometry parse(const std::string& text, std::uint64_t page_bytes = 4096);
};

/// Physical-address bits that select the cache set, inclusive. Empty for a
/// single-set cache.
struct BitRange {
  unsigned lo = 0;
  unsigned hi = 0;
  bool empty = true;
  friend bool operator==(const BitRange&, const BitRange&) = default;
};

BitRange set_index_bits(const CacheGeometry& g);

/// Set-index bits at or above the page offset, ascending.
std::vector<unsigned> color_bits(const CacheGeometry& g);

struct UsableColors {
  std::vector<unsigned> bits;
  std::uint64_t count = 1;
};

/// L2 color bits the L1 does not also index, so coloring leaves the private
/// L1 unpartitioned.
UsableColors usable_colors(const CacheGeometry& l2, const CacheGeometry& l1,
                           std::uint64_t page_bytes);

/// Packs `bits` of the page's base address (pfn * page_bytes) LSB-first.
std::uint64_t color_of(std::uint64_t page_frame_number, const std::vector<unsigned>& bits,
                       std::uint64_t page_bytes = 4096);

/// "usable colors: 4 (bits 13,14)"
std::string describe(const UsableColors& colors);

}  // namespace picar
