#include "qmpc/error.hpp"

namespace qmpc {

const char* to_string(Errc c) {
  switch (c) {
    case Errc::ZeroInverse: return "ZeroInverse";
    case Errc::DuplicateAbscissa: return "DuplicateAbscissa";
    case Errc::BadFractionExceeded: return "BadFractionExceeded";
    case Errc::NonTermination: return "NonTermination";
    case Errc::DealFailed: return "DealFailed";
    case Errc::DegreeTooHigh: return "DegreeTooHigh";
    case Errc::ReconstructFailed: return "ReconstructFailed";
    case Errc::GoodnessUnsatisfiable: return "GoodnessUnsatisfiable";
    case Errc::ParamsTooSmall: return "ParamsTooSmall";
    case Errc::ParseError: return "ParseError";
    case Errc::FanInViolation: return "FanInViolation";
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::AuditFailure: return "AuditFailure";
    case Errc::Internal: return "Internal";
  }
  return "Unknown";
}

}  // namespace qmpc
