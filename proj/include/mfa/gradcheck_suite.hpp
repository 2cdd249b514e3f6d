#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mfa {

struct SuiteItem {
  std::string name;
  double max_relative_error = 0;
  double threshold = 0;
  std::size_t checked = 0;
  std::size_t skipped_at_kinks = 0;
  std::string worst_coordinate;

  bool passed() const { return checked > 0 && max_relative_error < threshold; }
};

struct SuiteReport {
  std::uint64_t seed = 0;
  std::vector<SuiteItem> items;
  double seconds = 0;

  bool passed() const;
  std::vector<std::string> failures() const;
  std::string to_json() const;
};

/// 64-bit finite-difference checks of every primitive op, the loss, each attention block and a tiny
/// end-to-end network. Ops and blocks must stay below 1e-5, the network below 1e-4.
SuiteReport run_gradcheck_suite(std::uint64_t seed);

}  // namespace mfa
