#pragma once
// quantart command-line verbs.

#include <string>
#include <vector>

namespace quantart::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kBadArgs = 2;
inline constexpr int kIoError = 3;
inline constexpr int kDiverged = 4;

int run(int argc, char** argv);

// "0,0.5,1" -> sorted, deduplicated values in [0, 1]; throws ValueError otherwise.
std::vector<double> parse_grid_axis(const std::string& text, const char* name);

}  // namespace quantart::cli
