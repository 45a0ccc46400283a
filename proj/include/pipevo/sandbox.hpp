#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <string_view>

namespace pipevo {

enum class ErrorType {
    None,
    NameError,
    SyntaxError,
    TypeError,
    AssertionError,
    Timeout,
    ImportError,
    ValueError,
    IndexError,
    KeyError,
    Other,
    HarnessError,
    GatewayError,
};

std::string_view to_string(ErrorType type);
ErrorType error_type_from_string(std::string_view name);

struct ExecutionOutcome {
    bool passed = false;
    int exit_code = 0;
    std::string stdout_text;
    std::string stderr_text;
    ErrorType error_type = ErrorType::None;
    double duration = 0.0;  ///< seconds of wall clock
};

/// Maps the interpreter's final exception line to an ErrorType.
///
/// Only the last unindented `Name: message` line counts, so chained "During handling of the
/// above exception" sections and exception names quoted inside messages are ignored.
/// Direct subclasses fold into their base: ModuleNotFoundError -> ImportError,
/// IndentationError/TabError -> SyntaxError, UnboundLocalError -> NameError.
ErrorType classify_error(std::string_view stderr_text, int exit_code, bool timed_out);

/// Anything that can run candidate code against a test block.
class CodeExecutor {
public:
    virtual ~CodeExecutor() = default;
    virtual ExecutionOutcome execute(std::string_view code, std::string_view test_block) = 0;
};

struct SandboxOptions {
    std::chrono::duration<double> timeout{10.0};
    /// Interpreter name or path. Empty means $PIPEVO_PYTHON, then `python3` on PATH.
    std::string interpreter;
    std::size_t output_cap = 1 << 20;  ///< bytes kept per stream
    /// Parent of the per-call scratch directories. Empty means the system temp dir.
    std::filesystem::path scratch_root;
};

/// Runs `code + tests` as a script in a fresh process group inside a throwaway scratch dir.
/// The child gets a minimal environment; the whole group is killed at the deadline.
/// The scratch dir, and the script in it, is removed on every path.
class SandboxExecutor final : public CodeExecutor {
public:
    explicit SandboxExecutor(SandboxOptions options = {});

    ExecutionOutcome execute(std::string_view code, std::string_view test_block) override;
    ExecutionOutcome execute(std::string_view code, std::string_view test_block,
                             std::chrono::duration<double> timeout);

    const SandboxOptions& options() const noexcept { return options_; }

    /// Resolved interpreter path, or empty if none could be found.
    const std::filesystem::path& interpreter() const noexcept { return interpreter_; }

private:
    SandboxOptions options_;
    std::filesystem::path interpreter_;
};

/// Looks up `name` (or $PIPEVO_PYTHON / python3 when empty) on PATH. Empty result if absent.
std::filesystem::path resolve_interpreter(std::string_view name);

inline constexpr std::string_view kScratchPrefix = "pipevo-";

}  // namespace pipevo
