#pragma once

#include <stdexcept>
#include <string>

namespace fakp {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define FAKP_DEFINE_ERROR(Name)                                 \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& what) : Error(what) {}     \
  }

FAKP_DEFINE_ERROR(ShapeMismatch);
FAKP_DEFINE_ERROR(IndexOutOfRange);
FAKP_DEFINE_ERROR(NotScalar);
FAKP_DEFINE_ERROR(MissingGrad);
FAKP_DEFINE_ERROR(DegenerateBatch);
FAKP_DEFINE_ERROR(EmptyAxis);
FAKP_DEFINE_ERROR(TapeConsumed);
FAKP_DEFINE_ERROR(EmptyCloud);
FAKP_DEFINE_ERROR(TooFewPoints);
FAKP_DEFINE_ERROR(NotSymmetric);
FAKP_DEFINE_ERROR(DegenerateFrame);
FAKP_DEFINE_ERROR(NotMultipleOfDim);
FAKP_DEFINE_ERROR(GroupsIntersect);
FAKP_DEFINE_ERROR(NotAGroup);
FAKP_DEFINE_ERROR(BadK);
FAKP_DEFINE_ERROR(NeighborRadiusMismatch);
FAKP_DEFINE_ERROR(BadShapeKind);
FAKP_DEFINE_ERROR(EmptyDataset);
FAKP_DEFINE_ERROR(ParseError);
FAKP_DEFINE_ERROR(IoError);

#undef FAKP_DEFINE_ERROR

}  // namespace fakp
