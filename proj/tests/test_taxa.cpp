#include "doctest.h"
#include "hclab/taxa.hpp"
#include "hclab/error.hpp"

using namespace hclab;

TEST_CASE("labels round-trip through the canonical string") {
  const std::string s = "Animalia Chordata Aves Passeriformes Corvidae Corvus corax";
  const Taxon t = parse_label(s);
  CHECK(t.depth() == 7);
  CHECK(canonical_string(t) == s);
  CHECK(scientific_name(t) == "Corvus corax");
  CHECK(parse_label("  Plantae   Tracheophyta ").depth() == 2);
}

TEST_CASE("invalid labels raise typed errors") {
  auto code = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  CHECK(code([] { parse_label("   "); }) == ErrorCode::EmptyLabel);
  CHECK(code([] { parse_label("a b c d e f g h"); }) == ErrorCode::TooManyRanks);
  CHECK(code([] { Taxon::from_ranks({"a", ""}); }) == ErrorCode::InvalidTaxon);
  CHECK(code([] { scientific_name(parse_label("a b")); }) == ErrorCode::InvalidTaxon);
}

TEST_CASE("lowest common rank") {
  const Taxon a = parse_label("k p c o f g s1");
  const Taxon b = parse_label("k p c o f g s2");
  const Taxon c = parse_label("k q");
  const Taxon d = parse_label("x");
  CHECK(lowest_common_rank(a, b)->index == 5);
  CHECK(lowest_common_rank(a, c)->index == 0);
  CHECK_FALSE(lowest_common_rank(a, d).has_value());
  CHECK(RankLevel::of(6).name() == "species");
}
