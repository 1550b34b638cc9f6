#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evogame {

enum class Errc {
  kNotAntisymmetric,
  kEntryOutOfRange,
  kBadDimension,
  kEvenDimension,
  kDimensionMismatch,
  kNotInSimplex,
  kNotInterior,
  kConfigInvalid,
  kStateLeftSimplex,
  kRangeOutOfSpan,
  kEmpty,
  kDegenerateInitialDistance,
  kMeanAtNash,
  kNoInteriorEquilibrium,
  kSupportLeftPlateau,
  kParse,
  kIo,
};

constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kNotAntisymmetric: return "NotAntisymmetric";
    case Errc::kEntryOutOfRange: return "EntryOutOfRange";
    case Errc::kBadDimension: return "BadDimension";
    case Errc::kEvenDimension: return "EvenDimension";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kNotInSimplex: return "NotInSimplex";
    case Errc::kNotInterior: return "NotInterior";
    case Errc::kConfigInvalid: return "ConfigInvalid";
    case Errc::kStateLeftSimplex: return "StateLeftSimplex";
    case Errc::kRangeOutOfSpan: return "RangeOutOfSpan";
    case Errc::kEmpty: return "Empty";
    case Errc::kDegenerateInitialDistance: return "DegenerateInitialDistance";
    case Errc::kMeanAtNash: return "MeanAtNash";
    case Errc::kNoInteriorEquilibrium: return "NoInteriorEquilibrium";
    case Errc::kSupportLeftPlateau: return "SupportLeftPlateau";
    case Errc::kParse: return "Parse";
    case Errc::kIo: return "Io";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace evogame
