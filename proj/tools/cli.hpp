#pragma once

#include <iosfwd>

namespace qsel::cli {

/// Exit codes: 0 success, 1 usage error, 2 data or validation error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace qsel::cli
