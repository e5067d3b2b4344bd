#pragma once

// Entry point of the toppkit command-line tool. Exit codes: 0 success,
// 1 domain error, 2 usage error.
namespace toppkit::cli {

int cli_dispatch(int argc, char** argv);

}  // namespace toppkit::cli
