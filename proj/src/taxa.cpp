#include "hclab/taxa.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "hclab/error.hpp"

namespace hclab {

namespace {

constexpr std::array<std::string_view, kNumRanks> kRankNames = {
    "kingdom", "phylum", "class", "order", "family", "genus", "species"};

bool valid_name(const std::string& s) {
  return !s.empty() && std::none_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

RankLevel RankLevel::of(int i) {
  if (i < 0 || i >= static_cast<int>(kNumRanks)) {
    throw Error(ErrorCode::IndexOutOfRange, "rank index " + std::to_string(i) + " outside 0..6");
  }
  return RankLevel{static_cast<std::uint8_t>(i)};
}

std::string_view RankLevel::name() const { return kRankNames[index]; }

Taxon Taxon::from_ranks(const std::vector<std::string>& names) {
  if (names.empty()) throw Error(ErrorCode::EmptyLabel, "taxon needs at least a kingdom");
  if (names.size() > kNumRanks) {
    throw Error(ErrorCode::TooManyRanks, std::to_string(names.size()) + " ranks given, at most 7 allowed");
  }
  Taxon t;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!valid_name(names[i])) {
      throw Error(ErrorCode::InvalidTaxon, "rank " + std::string(kRankNames[i]) + " has an empty or blank name");
    }
    t.names_[i] = names[i];
  }
  t.depth_ = names.size();
  return t;
}

const std::string& Taxon::at(std::size_t rank) const {
  if (rank >= depth_) {
    throw Error(ErrorCode::IndexOutOfRange, "taxon has no " + std::string(kRankNames.at(std::min(rank, kNumRanks - 1))));
  }
  return names_[rank];
}

Taxon parse_label(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<std::string> tokens;
  for (std::string tok; in >> tok;) tokens.push_back(tok);
  if (tokens.empty()) throw Error(ErrorCode::EmptyLabel, "label text has no tokens");
  return Taxon::from_ranks(tokens);
}

std::string canonical_string(const Taxon& t) {
  std::string out;
  for (std::size_t i = 0; i < t.depth(); ++i) {
    if (i) out += ' ';
    out += t.at(i);
  }
  return out;
}

std::string scientific_name(const Taxon& t) {
  if (t.depth() < kNumRanks) throw Error(ErrorCode::InvalidTaxon, "scientific name needs genus and species");
  return t.at(5) + " " + t.at(6);
}

std::optional<RankLevel> lowest_common_rank(const Taxon& a, const Taxon& b) {
  const std::size_t common = std::min(a.depth(), b.depth());
  std::optional<RankLevel> deepest;
  for (std::size_t i = 0; i < common; ++i) {
    if (a.at(i) != b.at(i)) break;
    deepest = RankLevel::of(static_cast<int>(i));
  }
  return deepest;
}

}  // namespace hclab
