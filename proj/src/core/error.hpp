#pragma once

#include <stdexcept>
#include <string>

namespace df {

// Precondition / invariant breach in caller-supplied data. Maps to exit
// code 1 at the CLI and DF_ERR_CONTRACT at the C boundary.
class ContractViolation : public std::runtime_error {
 public:
  explicit ContractViolation(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / parse failure. Maps to DF_ERR_IO.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail_contract(const std::string& msg) {
  throw ContractViolation(msg);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail_contract(msg);
}

}  // namespace df
