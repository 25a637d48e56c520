#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mhs {

enum class CheckScope { Routes, Ssm, Esf, Grads, All };

std::optional<CheckScope> parse_check_scope(std::string_view name) noexcept;

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Runs the property suites of `scope` with fixed seeds. Output depends only
/// on the scope, never on timing or thread count.
std::vector<CheckResult> run_checks(CheckScope scope);

/// One `PASS name: detail` / `FAIL name: detail` line per result, then a
/// summary line. Returns true when every result passed.
bool print_checks(const std::vector<CheckResult>& results, std::ostream& out);

}  // namespace mhs
