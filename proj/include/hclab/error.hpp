#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hclab {

enum class ErrorCode {
  EmptyMatrix,
  NonSquare,
  NoConvergence,
  DimensionMismatch,
  NormalizationUndefined,
  EmptyLabel,
  TooManyRanks,
  InvalidTaxon,
  ConfigInvalid,
  TooFewSamples,
  UnknownTaxonNode,
  BatchTooSmall,
  NonFiniteLoss,
  EmptySpecies,
  NoQualifyingSpecies,
  ZeroVariation,
  EmptyGroup,
  DegenerateGroups,
  TooFewSpecies,
  IndexOutOfRange,
  MissingPrototype,
  InsufficientSupport,
  SingleClassTrain,
  KTooSmall,
  ParseError,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hclab
