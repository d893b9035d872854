#pragma once

#include <iosfwd>

namespace conan::cli {

// Exit codes; --help prints the same table.
enum Exit : int {
  kOk = 0,
  kFailure = 1,      // internal error or a failed gradient check
  kUsage = 2,        // bad flags, unknown config keys, out-of-range settings
  kIo = 3,           // missing or unwritable files
  kFormat = 4,       // schema, checksum or version errors in input files
  kTraining = 5,     // non-finite loss or gradient during training
  kDataset = 6,      // dataset fails validation or cannot be evaluated
};

// The whole tool, with its streams injectable for tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace conan::cli
