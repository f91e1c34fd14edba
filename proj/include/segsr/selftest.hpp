#pragma once

#include <ostream>

namespace segsr {

// Quick in-process oracle/property suite behind the CLI `selftest` subcommand:
// schedule oracles, gradient checks and zero-init transparency.
// Returns the number of failed checks.
int selftest(std::ostream& out);

}  // namespace segsr
