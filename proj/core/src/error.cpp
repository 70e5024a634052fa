/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sizeaug/error.hpp"

namespace sizeaug {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kUnknownTag: return "UnknownTag";
    case ErrorCode::kMalformedHeader: return "MalformedHeader";
    case ErrorCode::kTruncatedPayload: return "TruncatedPayload";
    case ErrorCode::kUnsupportedMaxval: return "UnsupportedMaxval";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kUnknownLabel: return "UnknownLabel";
    case ErrorCode::kUnknownSplit: return "UnknownSplit";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kNoLesion: return "NoLesion";
    case ErrorCode::kEmptyMask: return "EmptyMask";
    case ErrorCode::kSampleTooSmall: return "SampleTooSmall";
    case ErrorCode::kOneClassOnly: return "OneClassOnly";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kEmptySplit: return "EmptySplit";
  }
  return "Unknown";
}

}  // namespace sizeaug
