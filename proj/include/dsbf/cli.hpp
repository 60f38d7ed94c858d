#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dsbf {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitIo = 3;

// Overrides where relative output directories from a spec file land.
inline constexpr const char* kOutputRootEnv = "DSBF_OUTPUT_ROOT";

// Runs one command (gen, train, theory, gradcheck, sweep) and returns its
// exit code. Errors are reported on `err`, never thrown.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// --out wins as given. Otherwise the spec's `out` key (default "out") is
// used; a relative value resolves against $DSBF_OUTPUT_ROOT when set, else
// against the spec file's directory.
std::filesystem::path resolve_output_dir(const std::optional<std::string>& cli_out,
                                         const std::optional<std::string>& spec_out,
                                         const std::filesystem::path& spec_dir);

}  // namespace dsbf
