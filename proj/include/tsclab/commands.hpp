#pragma once

#include <iosfwd>
#include <vector>

#include "tsclab/runconfig.hpp"

namespace tsclab {

// exit codes shared by the CLI: 0 ok, 1 usage, 2 validation, 3 runtime
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

int cmd_generate(const RunConfig& cfg, std::ostream& out);
int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_eval(const RunConfig& cfg, std::ostream& out);
int cmd_compare(const RunConfig& cfg, const std::vector<std::string>& controllers,
                const std::vector<std::uint64_t>& seeds, std::ostream& out);
int cmd_selfcheck(std::ostream& out, bool inject_fault = false);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tsclab
