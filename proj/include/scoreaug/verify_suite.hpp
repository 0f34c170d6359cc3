#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "scoreaug/config.hpp"

namespace scoreaug {

struct CheckResult {
  std::string id;
  int m = 0;
  int n = 0;
  double sigma = 0.0;
  long work = 0;       // MC samples or grid resolution, 0 when not applicable
  double abs_err = 0.0;
  double rel_err = 0.0;
  double threshold = 0.0;  // applied to rel_err unless noted in the id
  bool pass = false;
  std::string note;
};

// Runs every score/theorem/oracle verification whose id contains `filter`
// (empty matches all). A case that cannot run reports pass=false with the
// error text in `note`.
std::vector<CheckResult> run_verification_suite(const std::string& filter,
                                                const RunConfig& cfg);

void write_verification_csv(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace scoreaug
