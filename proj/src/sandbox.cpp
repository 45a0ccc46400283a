#include "pipevo/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <optional>
#include <system_error>
#include <utility>
#include <vector>

#include <spdlog/spdlog.h>

namespace pipevo {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

std::string_view to_string(ErrorType type) {
    switch (type) {
        case ErrorType::None: return "None";
        case ErrorType::NameError: return "NameError";
        case ErrorType::SyntaxError: return "SyntaxError";
        case ErrorType::TypeError: return "TypeError";
        case ErrorType::AssertionError: return "AssertionError";
        case ErrorType::Timeout: return "Timeout";
        case ErrorType::ImportError: return "ImportError";
        case ErrorType::ValueError: return "ValueError";
        case ErrorType::IndexError: return "IndexError";
        case ErrorType::KeyError: return "KeyError";
        case ErrorType::Other: return "Other";
        case ErrorType::HarnessError: return "HarnessError";
        case ErrorType::GatewayError: return "GatewayError";
    }
    return "Other";
}

ErrorType error_type_from_string(std::string_view name) {
    static constexpr std::array kAll = {
        ErrorType::None,       ErrorType::NameError,  ErrorType::SyntaxError, ErrorType::TypeError,
        ErrorType::AssertionError, ErrorType::Timeout, ErrorType::ImportError, ErrorType::ValueError,
        ErrorType::IndexError, ErrorType::KeyError,   ErrorType::Other,       ErrorType::HarnessError,
        ErrorType::GatewayError,
    };
    for (auto t : kAll) {
        if (to_string(t) == name) return t;
    }
    return ErrorType::Other;
}

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

/// Exception name at the start of `line`, or empty if the line is not an exception line.
std::string_view exception_name(std::string_view line) {
    if (line.empty() || !is_ident_start(line.front())) return {};
    std::size_t end = 0;
    while (end < line.size() && is_ident_char(line[end])) ++end;
    std::string_view rest = line.substr(end);
    while (!rest.empty() && (rest.back() == ' ' || rest.back() == '\r' || rest.back() == '\t')) {
        rest.remove_suffix(1);
    }
    if (!rest.empty() && rest.front() != ':') return {};
    std::string_view name = line.substr(0, end);
    if (auto dot = name.rfind('.'); dot != std::string_view::npos) name = name.substr(dot + 1);
    return name;
}

ErrorType map_exception(std::string_view name) {
    if (name == "NameError" || name == "UnboundLocalError") return ErrorType::NameError;
    if (name == "SyntaxError" || name == "IndentationError" || name == "TabError") return ErrorType::SyntaxError;
    if (name == "TypeError") return ErrorType::TypeError;
    if (name == "AssertionError") return ErrorType::AssertionError;
    if (name == "ImportError" || name == "ModuleNotFoundError") return ErrorType::ImportError;
    if (name == "ValueError") return ErrorType::ValueError;
    if (name == "IndexError") return ErrorType::IndexError;
    if (name == "KeyError") return ErrorType::KeyError;
    return ErrorType::Other;
}

}  // namespace

ErrorType classify_error(std::string_view stderr_text, int exit_code, bool timed_out) {
    if (timed_out) return ErrorType::Timeout;
    if (exit_code == 0) return ErrorType::None;

    // Walk lines bottom-up; the first unindented "Name" or "Name: msg" line is the surfaced error.
    std::size_t end = stderr_text.size();
    while (end > 0) {
        std::size_t start = stderr_text.rfind('\n', end - 1);
        start = (start == std::string_view::npos) ? 0 : start + 1;
        std::string_view line = stderr_text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        end = start == 0 ? 0 : start - 1;
        if (line.empty()) continue;
        auto name = exception_name(line);
        if (!name.empty()) return map_exception(name);
        if (line.front() != ' ' && line.front() != '\t' && line.front() != '^') {
            // Unindented non-exception text after the traceback (e.g. stray prints); keep looking.
            continue;
        }
    }
    return ErrorType::Other;
}

// ---------------------------------------------------------------------------

fs::path resolve_interpreter(std::string_view name) {
    std::string wanted(name);
    if (wanted.empty()) {
        const char* env = std::getenv("PIPEVO_PYTHON");
        wanted = (env && *env) ? env : "python3";
    }
    if (wanted.find('/') != std::string::npos) {
        return ::access(wanted.c_str(), X_OK) == 0 ? fs::path(wanted) : fs::path{};
    }
    const char* path = std::getenv("PATH");
    std::string_view dirs = path ? path : "/usr/local/bin:/usr/bin:/bin";
    while (!dirs.empty()) {
        auto colon = dirs.find(':');
        std::string_view dir = dirs.substr(0, colon);
        if (!dir.empty()) {
            fs::path candidate = fs::path(dir) / wanted;
            if (::access(candidate.c_str(), X_OK) == 0) return candidate;
        }
        if (colon == std::string_view::npos) break;
        dirs.remove_prefix(colon + 1);
    }
    return {};
}

namespace {

class ScratchDir {
public:
    explicit ScratchDir(const fs::path& root) {
        std::string templ = (root / (std::string(kScratchPrefix) + "XXXXXX")).string();
        std::vector<char> buf(templ.begin(), templ.end());
        buf.push_back('\0');
        if (::mkdtemp(buf.data()) == nullptr) {
            throw std::system_error(errno, std::generic_category(), "mkdtemp in " + root.string());
        }
        path_ = buf.data();
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
        if (ec) spdlog::warn("could not remove scratch dir {}: {}", path_.string(), ec.message());
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const fs::path& path() const noexcept { return path_; }

private:
    fs::path path_;
};

class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    ~Fd() { reset(); }
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    int get() const noexcept { return fd_; }
    void reset() noexcept {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

std::pair<Fd, Fd> make_pipe() {
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) throw std::system_error(errno, std::generic_category(), "pipe2");
    return {Fd(fds[0]), Fd(fds[1])};
}

struct Capture {
    std::string data;
    bool open = true;
};

/// Reads what is available; bytes past `cap` are drained and dropped so the child never blocks.
void drain(Fd& fd, Capture& cap, std::size_t limit) {
    char buf[8192];
    for (;;) {
        ssize_t n = ::read(fd.get(), buf, sizeof buf);
        if (n > 0) {
            std::size_t room = limit > cap.data.size() ? limit - cap.data.size() : 0;
            cap.data.append(buf, std::min<std::size_t>(room, static_cast<std::size_t>(n)));
            continue;
        }
        if (n == 0) {
            cap.open = false;
            fd.reset();
        } else if (errno == EINTR) {
            continue;
        }
        return;
    }
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    if (from.empty()) return;
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
}

ExecutionOutcome harness_failure(std::string message, Clock::time_point started) {
    ExecutionOutcome out;
    out.passed = false;
    out.exit_code = -1;
    out.stderr_text = std::move(message);
    out.error_type = ErrorType::HarnessError;
    out.duration = std::chrono::duration<double>(Clock::now() - started).count();
    return out;
}

}  // namespace

SandboxExecutor::SandboxExecutor(SandboxOptions options)
    : options_(std::move(options)), interpreter_(resolve_interpreter(options_.interpreter)) {
    if (options_.scratch_root.empty()) options_.scratch_root = fs::temp_directory_path();
}

ExecutionOutcome SandboxExecutor::execute(std::string_view code, std::string_view test_block) {
    return execute(code, test_block, options_.timeout);
}

ExecutionOutcome SandboxExecutor::execute(std::string_view code, std::string_view test_block,
                                          std::chrono::duration<double> timeout) {
    const auto started = Clock::now();
    if (interpreter_.empty()) {
        return harness_failure("HarnessError: no Python interpreter found (set PIPEVO_PYTHON)", started);
    }

    std::optional<ScratchDir> scratch;
    try {
        scratch.emplace(options_.scratch_root);
        std::ofstream script(scratch->path() / "solution.py", std::ios::binary);
        script << code << "\n\n" << test_block << "\n";
        script.close();
        if (!script) throw std::runtime_error("write failed");
    } catch (const std::exception& e) {
        return harness_failure(std::string("HarnessError: cannot stage script: ") + e.what(), started);
    }

    auto [out_r, out_w] = make_pipe();
    auto [err_r, err_w] = make_pipe();
    auto [exec_r, exec_w] = make_pipe();

    const std::string interp = interpreter_.string();
    const std::string scratch_str = scratch->path().string();
    const std::string home = "HOME=" + scratch_str;
    const std::string tmpdir = "TMPDIR=" + scratch_str;
    std::array<const char*, 6> argv = {interp.c_str(), "-s", "-B", "solution.py", nullptr, nullptr};
    std::array<const char*, 7> envp = {"PATH=/usr/local/bin:/usr/bin:/bin",
                                       home.c_str(),
                                       tmpdir.c_str(),
                                       "LANG=C.UTF-8",
                                       "PYTHONHASHSEED=0",
                                       "PYTHONIOENCODING=utf-8",
                                       nullptr};

    pid_t pid = ::fork();
    if (pid < 0) return harness_failure("HarnessError: fork failed", started);
    if (pid == 0) {
        // Child: only async-signal-safe calls from here on.
        ::setpgid(0, 0);
        int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
        ::dup2(out_w.get(), STDOUT_FILENO);
        ::dup2(err_w.get(), STDERR_FILENO);
        if (::chdir(scratch_str.c_str()) != 0) {
            int e = errno;
            (void)!::write(exec_w.get(), &e, sizeof e);
            ::_exit(127);
        }
        ::execve(interp.c_str(), const_cast<char* const*>(argv.data()),
                 const_cast<char* const*>(envp.data()));
        int e = errno;
        (void)!::write(exec_w.get(), &e, sizeof e);
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    out_w.reset();
    err_w.reset();
    exec_w.reset();

    int exec_errno = 0;
    if (::read(exec_r.get(), &exec_errno, sizeof exec_errno) == sizeof exec_errno) {
        ::waitpid(pid, nullptr, 0);
        return harness_failure(std::string("HarnessError: cannot start interpreter: ") +
                                   std::strerror(exec_errno), started);
    }

    ::fcntl(out_r.get(), F_SETFL, O_NONBLOCK);
    ::fcntl(err_r.get(), F_SETFL, O_NONBLOCK);
    Capture out_cap, err_cap;
    const auto deadline = started + std::chrono::duration_cast<Clock::duration>(timeout);
    bool timed_out = false;
    bool reaped = false;
    int status = 0;

    while (!reaped || out_cap.open || err_cap.open) {
        if (!reaped) {
            pid_t r = ::waitpid(pid, &status, WNOHANG);
            if (r == pid) {
                reaped = true;
                // Take down anything the script left running in its group.
                ::kill(-pid, SIGKILL);
            }
        }
        if (!reaped && Clock::now() >= deadline) {
            timed_out = true;
            ::kill(-pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            reaped = true;
        }

        std::array<pollfd, 2> pfds{};
        nfds_t n = 0;
        if (out_cap.open) pfds[n++] = {out_r.get(), POLLIN, 0};
        if (err_cap.open) pfds[n++] = {err_r.get(), POLLIN, 0};
        if (n == 0) {
            if (!reaped) ::usleep(2000);
            continue;
        }
        int wait_ms = 20;
        if (!reaped) {
            auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
            wait_ms = static_cast<int>(std::clamp<long long>(left, 1, 20));
        }
        ::poll(pfds.data(), n, wait_ms);
        if (out_cap.open) drain(out_r, out_cap, options_.output_cap);
        if (err_cap.open) drain(err_r, err_cap, options_.output_cap);
    }

    ExecutionOutcome outcome;
    outcome.duration = std::chrono::duration<double>(Clock::now() - started).count();
    if (WIFEXITED(status)) {
        outcome.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        outcome.exit_code = 128 + WTERMSIG(status);
    }
    outcome.stdout_text = std::move(out_cap.data);
    outcome.stderr_text = std::move(err_cap.data);
    // Tracebacks name the script by absolute path; keep them stable across calls.
    replace_all(outcome.stderr_text, scratch_str + "/", "");
    replace_all(outcome.stdout_text, scratch_str + "/", "");
    outcome.error_type = classify_error(outcome.stderr_text, outcome.exit_code, timed_out);
    if (timed_out && outcome.exit_code == 0) outcome.exit_code = 128 + SIGKILL;
    outcome.passed = !timed_out && outcome.exit_code == 0 && outcome.error_type == ErrorType::None;
    return outcome;
}

}  // namespace pipevo
