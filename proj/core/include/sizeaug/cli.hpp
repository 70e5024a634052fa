/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <ostream>

namespace sizeaug {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailed = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `sizeaug` tool. Subcommands: synth, augment, stats,
// param-table, gradcheck, train, eval, experiment. Global flags --seed,
// --config and --out are accepted before or after the subcommand.
// Returns 0 on success, 1 when a verification fails, 2 on usage or I/O errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sizeaug
