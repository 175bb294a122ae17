#pragma once

#include <stdexcept>
#include <string>

namespace pcm {

enum class ErrorKind {
  MissingCounterfactual,
  InsufficientControls,
  OneSidedCluster,
  SampleTooSmall,
  OutOfRange,
  InvalidSpec,
  InvalidDataset,
  MissingLabels,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingCounterfactual: return "missing-counterfactual";
    case ErrorKind::InsufficientControls: return "insufficient-controls";
    case ErrorKind::OneSidedCluster: return "one-sided-cluster";
    case ErrorKind::SampleTooSmall: return "sample-too-small";
    case ErrorKind::OutOfRange: return "out-of-range";
    case ErrorKind::InvalidSpec: return "invalid-spec";
    case ErrorKind::InvalidDataset: return "invalid-dataset";
    case ErrorKind::MissingLabels: return "missing-labels";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pcm
