#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pvcg {

/// Broad failure class; the CLI maps each to a stable exit code.
enum class ErrorKind { parse, validation, solver };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorKind::parse, what) {}
};

/// Named invariant violation. `code` is stable and machine-readable.
struct Diagnostic {
  std::string code;
  std::string message;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Diagnostic> diagnostics)
      : Error(ErrorKind::validation, summarize(diagnostics)), diagnostics_(std::move(diagnostics)) {}
  ValidationError(std::string code, const std::string& message)
      : ValidationError(std::vector<Diagnostic>{{std::move(code), message}}) {}

  const std::vector<Diagnostic>& diagnostics() const noexcept { return diagnostics_; }

 private:
  static std::string summarize(const std::vector<Diagnostic>& ds) {
    std::string out = "validation failed";
    for (const auto& d : ds) out += "; " + d.code + ": " + d.message;
    return out;
  }

  std::vector<Diagnostic> diagnostics_;
};

class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what) : Error(ErrorKind::solver, what) {}
};

/// Feasible set is empty (all coordinates pinned, or caps too small).
class InfeasibleError : public SolverError {
 public:
  explicit InfeasibleError(const std::string& what) : SolverError("infeasible: " + what) {}
};

}  // namespace pvcg
