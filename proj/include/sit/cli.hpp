#pragma once

#include <ostream>

namespace sit {

// Subcommands gen-data, train, eval, alpha-cov, heatmap, topn, certify and
// time. Exit status: 0 success, 1 failed certification or runtime failure,
// 2 usage, contract or configuration errors, 3 resource limits.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sit
