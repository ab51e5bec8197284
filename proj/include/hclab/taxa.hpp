#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hclab {

inline constexpr std::size_t kNumRanks = 7;

/// Rank depth: 0 = kingdom ... 6 = species.
struct RankLevel {
  std::uint8_t index = 0;

  static RankLevel of(int i);
  std::string_view name() const;
  friend auto operator<=>(const RankLevel&, const RankLevel&) = default;
};

/// A Linnaean label truncated only at the tail. Kingdom is always present.
class Taxon {
 public:
  /// Validates names (nonempty, no whitespace) and the 1..7 length bound.
  static Taxon from_ranks(const std::vector<std::string>& names);

  std::size_t depth() const { return depth_; }
  bool has(std::size_t rank) const { return rank < depth_; }
  const std::string& at(std::size_t rank) const;
  const std::string& species_or_deepest() const { return at(depth_ - 1); }

  friend bool operator==(const Taxon&, const Taxon&) = default;

 private:
  std::array<std::string, kNumRanks> names_{};
  std::size_t depth_ = 0;
};

enum class LabelMode { Taxonomic, Scientific };

Taxon parse_label(std::string_view text);
std::string canonical_string(const Taxon& t);
/// Genus and species names joined by a space; requires a full 7-rank taxon.
std::string scientific_name(const Taxon& t);
std::optional<RankLevel> lowest_common_rank(const Taxon& a, const Taxon& b);

}  // namespace hclab
