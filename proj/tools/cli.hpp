// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace flicker::cli {

/// Entry point of the `flicker` command. Returns the process exit code:
/// 0 on success, 1 on a run failure, 2 on a usage or configuration error.
int run(int argc, char** argv);

}  // namespace flicker::cli
