#pragma once
#include <stdexcept>
#include <string>

namespace qmpc {

enum class Errc {
  ZeroInverse,
  DuplicateAbscissa,
  BadFractionExceeded,
  NonTermination,
  DealFailed,
  DegreeTooHigh,
  ReconstructFailed,
  GoodnessUnsatisfiable,
  ParamsTooSmall,
  ParseError,
  FanInViolation,
  CycleDetected,
  AuditFailure,
  Internal,
};

const char* to_string(Errc c);

class Error : public std::runtime_error {
public:
  Error(Errc c, const std::string& what)
      : std::runtime_error(std::string(to_string(c)) + ": " + what), c_(c) {}
  Errc code() const { return c_; }

private:
  Errc c_;
};

[[noreturn]] inline void fail(Errc c, const std::string& what) { throw Error(c, what); }

// Internal-consistency check; not a user-facing error path.
#define QMPC_CHECK(cond, msg)                                       \
  do {                                                              \
    if (!(cond)) ::qmpc::fail(::qmpc::Errc::Internal, (msg));       \
  } while (0)

}  // namespace qmpc
