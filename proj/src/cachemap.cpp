#include "picar/cachemap.hpp"

#include <algorithm>
#include <bit>
#include <cctype>

namespace picar {

void CacheGeometry::validate() const {
  const std::pair<const char*, std::uint64_t> fields[] = {
      {"total size", total_bytes}, {"ways", ways}, {"line size", line_bytes}, {"page size", page_bytes}};
  for (const auto& [name, v] : fields) {
    if (!std::has_single_bit(v)) {
      throw GeometryError(std::string("cache ") + name + " must be a power of two, got " +
                          std::to_string(v));
    }
  }
  if (total_bytes < ways * line_bytes) {
    throw GeometryError("cache of " + std::to_string(total_bytes) + " bytes cannot hold " +
                        std::to_string(ways) + " ways of " + std::to_string(line_bytes) + "-byte lines");
  }
}

CacheGeometry CacheGeometry::parse(const std::string& text, std::uint64_t page_bytes) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  if (parts.size() != 3) throw GeometryError("cache geometry must be SIZE,WAYS,LINE: '" + text + "'");

  auto number = [&](std::string s) -> std::uint64_t {
    std::uint64_t mult = 1;
    if (!s.empty()) {
      const char suffix = static_cast<char>(std::toupper(static_cast<unsigned char>(s.back())));
      if (suffix == 'K') mult = 1024;
      if (suffix == 'M') mult = 1024 * 1024;
      if (mult != 1) s.pop_back();
    }
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      throw GeometryError("bad number in cache geometry '" + text + "'");
    }
    return std::stoull(s) * mult;
  };
  CacheGeometry g{number(parts[0]), number(parts[1]), number(parts[2]), page_bytes};
  g.validate();
  return g;
}

BitRange set_index_bits(const CacheGeometry& g) {
  g.validate();
  const unsigned lo = static_cast<unsigned>(std::countr_zero(g.line_bytes));
  const unsigned index_bits = static_cast<unsigned>(std::countr_zero(g.sets()));
  if (index_bits == 0) return {lo, lo, true};
  return {lo, lo + index_bits - 1, false};
}

std::vector<unsigned> color_bits(const CacheGeometry& g) {
  const BitRange r = set_index_bits(g);
  std::vector<unsigned> bits;
  if (r.empty) return bits;
  const unsigned page_shift = static_cast<unsigned>(std::countr_zero(g.page_bytes));
  for (unsigned b = std::max(r.lo, page_shift); b <= r.hi; ++b) bits.push_back(b);
  return bits;
}

UsableColors usable_colors(const CacheGeometry& l2, const CacheGeometry& l1,
                           std::uint64_t page_bytes) {
  CacheGeometry l2p = l2, l1p = l1;
  l2p.page_bytes = l1p.page_bytes = page_bytes;
  const auto outer = color_bits(l2p);
  const auto inner = color_bits(l1p);
  UsableColors u;
  for (unsigned b : outer) {
    if (std::find(inner.begin(), inner.end(), b) == inner.end()) u.bits.push_back(b);
  }
  u.count = std::uint64_t{1} << u.bits.size();
  return u;
}

std::uint64_t color_of(std::uint64_t page_frame_number, const std::vector<unsigned>& bits,
                       std::uint64_t page_bytes) {
  const std::uint64_t addr = page_frame_number * page_bytes;
  std::uint64_t color = 0;
  for (std::size_t k = 0; k < bits.size(); ++k) color |= ((addr >> bits[k]) & 1u) << k;
  return color;
}

std::string describe(const UsableColors& colors) {
  std::string s = "usable colors: " + std::to_string(colors.count) + " (bits ";
  if (colors.bits.empty()) s += "none";
  for (std::size_t i = 0; i < colors.bits.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(colors.bits[i]);
  }
  return s + ")";
}

}  // namespace picar
