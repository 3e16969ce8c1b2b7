// Copyright 2026 The bifsnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bifsnn {

enum class ErrorKind {
  NonPositiveTime,
  MisalignedGrid,
  IndexOutOfRange,
  RateTooHigh,
  TargetOverflow,
  NonPositiveThreshold,
  UnstableStep,
  DimensionMismatch,
  NonSquare,
  NoConvergence,
  GridMismatch,
  RecordMismatch,
  ShapeMismatch,
  EmptyDataset,
  BadMagic,
  TruncatedFile,
  DimensionOverflow,
  CountMismatch,
  ConfigInvalid,
  BadFormat,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonPositiveTime: return "NonPositiveTime";
    case ErrorKind::MisalignedGrid: return "MisalignedGrid";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::RateTooHigh: return "RateTooHigh";
    case ErrorKind::TargetOverflow: return "TargetOverflow";
    case ErrorKind::NonPositiveThreshold: return "NonPositiveThreshold";
    case ErrorKind::UnstableStep: return "UnstableStep";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonSquare: return "NonSquare";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::RecordMismatch: return "RecordMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::DimensionOverflow: return "DimensionOverflow";
    case ErrorKind::CountMismatch: return "CountMismatch";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::BadFormat: return "BadFormat";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (and tests) can branch on the cause without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

// Literal messages skip the std::string construction on the hot path.
inline void require(bool condition, ErrorKind kind, const char* what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace bifsnn
