#pragma once

namespace surfcast {

// Exit codes: 0 success, 2 config error, 3 input error, 4 numerical failure.
int run_cli(int argc, const char* const* argv);

}  // namespace surfcast
