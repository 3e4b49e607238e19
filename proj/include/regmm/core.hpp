#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace regmm {

using Vector = Eigen::VectorXd;
/// Point sets are stored one point per row.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ErrorCode {
  InvalidMeasure,
  InvalidParams,
  InvalidInterval,
  DomainOverflow,
  SizeLimitExceeded,
  InsufficientData,
  NonPositiveMoment,
  NotConverged,
  Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidMeasure: return "invalid-measure";
    case ErrorCode::InvalidParams: return "invalid-params";
    case ErrorCode::InvalidInterval: return "invalid-interval";
    case ErrorCode::DomainOverflow: return "domain-overflow";
    case ErrorCode::SizeLimitExceeded: return "size-limit-exceeded";
    case ErrorCode::InsufficientData: return "insufficient-data";
    case ErrorCode::NonPositiveMoment: return "nonpositive-m2";
    case ErrorCode::NotConverged: return "not-converged";
    case ErrorCode::Io: return "io-error";
  }
  return "unknown";
}

}  // namespace regmm
