#pragma once

#include <ostream>

namespace pipevo {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitEnvironmentError = 2;

/// Entry point of the `pipevo` binary, callable in-process.
///
///     pipevo evolve      --config C --generations N --seed S [--deterministic] [--no-stratify] [--out D] [--resume]
///     pipevo validate    --config C (--genome F | --solo MODEL) [--benchmark K] [--runs 5] [--no-early-stopping]
///     pipevo report      --run-dir D [--tables taxonomy,iterations,noise,ceiling,significance]
///     pipevo noise-study [--genomes 20 --problems 25 --p 0.5 --evals 1 --trials N] [--run-dir D]
///     pipevo exec-one    --code F --tests F [--timeout 10]
///     pipevo difficulty  --config C [--model M] [--runs 5] [--out F]
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pipevo
