#pragma once

#include <iosfwd>

namespace cb {

// Entry point behind the `cb` binary. Results go to `out`, diagnostics to
// `err` as a single "error: <code>: <message>" line. Exit codes: 0 ok,
// 1 usage, 2 validation, 3 provider, 4 execution, 5 repository.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cb
