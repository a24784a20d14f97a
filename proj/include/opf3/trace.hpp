#pragma once

#include <string>
#include <vector>

namespace opf3 {

struct TraceRecord {
  int iter = 0;
  double objective = 0.0;
  double min_v = 0.0;  // magnitude, p.u.
  double max_v = 0.0;
  double du_norm = 0.0;
  double mu_norm = 0.0;
  int violations = 0;
  double ms = 0.0;
};

struct ProfileRow {
  std::string bus;
  char phase = 'a';
  double vmag_pu = 0.0;
};

struct IterationTrace {
  std::vector<TraceRecord> records;
  std::vector<ProfileRow> profile;
};

}  // namespace opf3
