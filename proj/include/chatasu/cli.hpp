#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace chatasu::cli {

// Runs one command line given without the program name. Never throws.
// Returns 0 on success, 1 on data errors (bad or missing input files,
// failed validation, backend failures) and 2 on usage errors.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace chatasu::cli
