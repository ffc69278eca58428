#pragma once

#include <stdexcept>
#include <string>

namespace mdpcg {

/// Error categories; the CLI maps these onto process exit codes.
enum class ErrorCode {
  ParseError,           // malformed game file
  KernelNotStochastic,  // kernel column fails normalization beyond tolerance
  RankDeficient,        // incidence rank below S-1
  NegativeMass,         // cost/potential evaluated at y with negative entries
  NotInterior,          // interior KKT solve produced a nonpositive flow
  SingularSystem,       // KKT matrix numerically singular
  MaxIterations,        // Frank-Wolfe gap above tolerance at iteration cap
  DegenerateOracle,     // linear oracle returned an infeasible vertex
  OracleNoConverge,     // relative value iteration span above tolerance at cap
  NegativeMultiplier,   // recovered multiplier significantly negative
  NotStrictlyPositive,  // sensitivity requested at a degenerate equilibrium
  IllConditioned,       // Schur complement condition number beyond gate
  SelfLoopUnsupported,  // primal graph cannot encode a self-loop hyperarc
  NotInvertible,        // transformation T not invertible
  InvalidArgument,      // malformed programmatic input
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

#define MDPCG_DEFINE_ERROR(Name)                                           \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(ErrorCode::Name, what) {} \
  }

MDPCG_DEFINE_ERROR(ParseError);
MDPCG_DEFINE_ERROR(KernelNotStochastic);
MDPCG_DEFINE_ERROR(RankDeficient);
MDPCG_DEFINE_ERROR(NegativeMass);
MDPCG_DEFINE_ERROR(NotInterior);
MDPCG_DEFINE_ERROR(SingularSystem);
MDPCG_DEFINE_ERROR(MaxIterations);
MDPCG_DEFINE_ERROR(DegenerateOracle);
MDPCG_DEFINE_ERROR(OracleNoConverge);
MDPCG_DEFINE_ERROR(NegativeMultiplier);
MDPCG_DEFINE_ERROR(NotStrictlyPositive);
MDPCG_DEFINE_ERROR(IllConditioned);
MDPCG_DEFINE_ERROR(SelfLoopUnsupported);
MDPCG_DEFINE_ERROR(NotInvertible);
MDPCG_DEFINE_ERROR(InvalidArgument);

#undef MDPCG_DEFINE_ERROR

}  // namespace mdpcg
