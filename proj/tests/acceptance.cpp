// Runs every acceptance criterion and prints one verdict line per criterion.
#include <chrono>
#include <iostream>
#include <map>

#include "ncota/verify.hpp"

int main() {
  using namespace ncota;
  std::map<std::string, int> criterion;
  for (const auto& info : suite_list()) criterion[info.name] = info.criterion;
  bool ok = true;
  auto last = std::chrono::steady_clock::now();
  run_suites({}, VerifyOptions{}, [&](const SuiteResult& r) {
    const auto now = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(now - last).count();
    last = now;
    ok = ok && r.pass;
    std::cout << "criterion " << criterion[r.name] << " [" << r.name << "]: " << (r.pass ? "PASS" : "FAIL") << "  " << r.statistic << " = "
              << r.value << " (threshold " << r.threshold << ")  " << r.detail << "  [" << secs << " s]" << std::endl;
  });
  std::cout << (ok ? "all criteria passed" : "some criteria failed") << std::endl;
  return ok ? 0 : 1;
}
