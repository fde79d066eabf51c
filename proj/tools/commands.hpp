#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

// Command logic of the icfit executable, kept out of main() so tests can
// drive it in-process.
namespace icfit::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kInvalidSpec = 2,
  kOutputExists = 3,
  kEstimatorFailure = 4,
  kReportMismatch = 5,
};

// argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

// Worker count for replicate fan-out: ICFIT_THREADS when set to a positive
// integer, otherwise the OpenMP default.
int worker_count();

}  // namespace icfit::cli
