#pragma once

#include <stdexcept>
#include <string>

namespace ftsens {

/// Base of every typed failure raised by the library. `code()` is a stable
/// identifier used by the CLI in reports.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class NotIncreasedWithinBudget : public Error {
 public:
  explicit NotIncreasedWithinBudget(long budget)
      : Error("NotIncreasedWithinBudget",
              "diameter did not exceed the threshold within " + std::to_string(budget) + " steps"),
        budget_(budget) {}
  NotIncreasedWithinBudget(long budget, const std::string& context)
      : Error("NotIncreasedWithinBudget", "diameter did not exceed the threshold within " +
                                              std::to_string(budget) + " steps (" + context + ")"),
        budget_(budget) {}
  long budget() const noexcept { return budget_; }

 private:
  long budget_;
};

class UnsupportedRadius : public Error {
 public:
  explicit UnsupportedRadius(const std::string& what) : Error("UnsupportedRadius", what) {}
};

class IntegratorDivergence : public Error {
 public:
  explicit IntegratorDivergence(const std::string& what) : Error("IntegratorDivergence", what) {}
};

class BisectionStalled : public Error {
 public:
  explicit BisectionStalled(const std::string& what) : Error("BisectionStalled", what) {}
};

class RadiusWindowEmpty : public Error {
 public:
  explicit RadiusWindowEmpty(long stage)
      : Error("RadiusWindowEmpty", "no radius on the search grid hits the window at stage " +
                                       std::to_string(stage)),
        stage_(stage) {}
  long stage() const noexcept { return stage_; }

 private:
  long stage_;
};

class NoConvergence : public Error {
 public:
  explicit NoConvergence(const std::string& what) : Error("NoConvergence", what) {}
};

class NoChain : public Error {
 public:
  NoChain() : Error("NoChain", "endpoints are not connected through the catalog") {}
};

class SplitFailed : public Error {
 public:
  explicit SplitFailed(int level)
      : Error("SplitFailed", "image diameter below delta at level " + std::to_string(level)),
        level_(level) {}
  int level() const noexcept { return level_; }

 private:
  int level_;
};

class IncompatibleRepresentation : public Error {
 public:
  explicit IncompatibleRepresentation(const std::string& what)
      : Error("IncompatibleRepresentation", what) {}
};

class PrecisionEscalation : public Error {
 public:
  explicit PrecisionEscalation(const std::string& what) : Error("PrecisionEscalation", what) {}
};

}  // namespace ftsens
