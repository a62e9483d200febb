#pragma once

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include <fcntl.h>
#include <poll.h>
#include <sys/resource.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

namespace autothink {

// Infrastructure failure: the program could not be run at all. Distinct
// from a program that ran and failed.
class SandboxUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunLimits {
  double time_limit_s = 2.0;
  std::uint64_t memory_limit_bytes = 512ull << 20;
  std::size_t max_output_bytes = 16u << 20;
};

struct RunRequest {
  std::string command;  // passed to /bin/sh -c
  std::string stdin_bytes;
  RunLimits limits;
};

enum class KilledBy { None, Timeout, Signal, OutputLimit };

struct RunResult {
  int exit_status = -1;  // valid when killed_by == None
  std::string stdout_bytes;
  std::string stderr_bytes;
  double wall_time_s = 0.0;
  KilledBy killed_by = KilledBy::None;
  int signal = 0;
};

class SandboxRunner {
 public:
  virtual ~SandboxRunner() = default;
  virtual RunResult run(const RunRequest& req) = 0;
};

// Runs the command as a child process in its own process group with an
// address-space cap. The whole group is killed on timeout.
class ProcessSandbox final : public SandboxRunner {
 public:
  RunResult run(const RunRequest& req) override {
    // A child that exits before reading its stdin must not take us down.
    static const bool sigpipe_ignored = (std::signal(SIGPIPE, SIG_IGN), true);
    (void)sigpipe_ignored;
    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (::pipe(in_pipe) != 0) throw SandboxUnavailable("pipe: " + std::string(std::strerror(errno)));
    if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0) {
      ::close(in_pipe[0]);
      ::close(in_pipe[1]);
      throw SandboxUnavailable("pipe: " + std::string(std::strerror(errno)));
    }

    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) throw SandboxUnavailable("fork: " + std::string(std::strerror(errno)));
    if (pid == 0) {
      ::setpgid(0, 0);
      rlimit as{req.limits.memory_limit_bytes, req.limits.memory_limit_bytes};
      ::setrlimit(RLIMIT_AS, &as);
      rlimit core{0, 0};
      ::setrlimit(RLIMIT_CORE, &core);
      ::dup2(in_pipe[0], STDIN_FILENO);
      ::dup2(out_pipe[1], STDOUT_FILENO);
      ::dup2(err_pipe[1], STDERR_FILENO);
      for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
      ::execl("/bin/sh", "sh", "-c", req.command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::setpgid(pid, pid);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);

    RunResult result;
    int fds[3] = {in_pipe[1], out_pipe[0], err_pipe[0]};
    for (int fd : fds) ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK);
    if (req.stdin_bytes.empty()) {
      ::close(fds[0]);
      fds[0] = -1;
    }
    std::size_t written = 0;
    const auto deadline = start + std::chrono::duration<double>(req.limits.time_limit_s);

    auto kill_group = [&](KilledBy why) {
      if (result.killed_by == KilledBy::None) result.killed_by = why;
      ::kill(-pid, SIGKILL);
    };

    char buf[65536];
    while (fds[1] >= 0 || fds[2] >= 0) {
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) {
        kill_group(KilledBy::Timeout);
        break;
      }
      pollfd pfd[3];
      int n = 0;
      int which[3];
      for (int k = 0; k < 3; ++k) {
        if (fds[k] < 0) continue;
        pfd[n] = {fds[k], static_cast<short>(k == 0 ? POLLOUT : POLLIN), 0};
        which[n++] = k;
      }
      const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
      const int rc = ::poll(pfd, n, static_cast<int>(std::max<long long>(1, remaining)));
      if (rc < 0) {
        if (errno == EINTR) continue;
        kill_group(KilledBy::Signal);
        break;
      }
      for (int j = 0; j < n; ++j) {
        if (!pfd[j].revents) continue;
        const int k = which[j];
        if (k == 0) {
          const ssize_t w = ::write(fds[0], req.stdin_bytes.data() + written, req.stdin_bytes.size() - written);
          if (w > 0) written += static_cast<std::size_t>(w);
          if (w < 0 && errno != EAGAIN) written = req.stdin_bytes.size();
          if (written >= req.stdin_bytes.size()) {
            ::close(fds[0]);
            fds[0] = -1;
          }
          continue;
        }
        const ssize_t r = ::read(fds[k], buf, sizeof buf);
        if (r > 0) {
          auto& sink = k == 1 ? result.stdout_bytes : result.stderr_bytes;
          sink.append(buf, static_cast<std::size_t>(r));
          if (sink.size() > req.limits.max_output_bytes) kill_group(KilledBy::OutputLimit);
        } else if (r == 0 || errno != EAGAIN) {
          ::close(fds[k]);
          fds[k] = -1;
        }
      }
      if (result.killed_by != KilledBy::None) break;
    }
    for (int fd : fds)
      if (fd >= 0) ::close(fd);

    int status = 0;
    for (;;) {
      const pid_t w = ::waitpid(pid, &status, WNOHANG);
      if (w == pid) break;
      if (w < 0 && errno != EINTR) break;
      if (std::chrono::steady_clock::now() >= deadline) kill_group(KilledBy::Timeout);
      ::usleep(1000);
    }
    // Reap anything left in the group (background children of the shell).
    ::kill(-pid, SIGKILL);

    result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (WIFEXITED(status)) {
      result.exit_status = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
      result.signal = WTERMSIG(status);
      if (result.killed_by == KilledBy::None) result.killed_by = KilledBy::Signal;
    }
    return result;
  }
};

// Source file materialized for a command template. Placeholders:
// {source} is the program file, {dir} its private working directory.
class ProgramWorkspace {
 public:
  ProgramWorkspace(std::string_view source, std::string_view extension = ".txt") {
    std::string tmpl = (std::filesystem::temp_directory_path() / "autothink-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw SandboxUnavailable("mkdtemp failed");
    dir_ = tmpl;
    source_ = dir_ / ("program" + std::string(extension));
    std::ofstream(source_, std::ios::binary) << source;
    if (!std::filesystem::exists(source_)) throw SandboxUnavailable("cannot write program source");
  }
  ~ProgramWorkspace() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  ProgramWorkspace(const ProgramWorkspace&) = delete;
  ProgramWorkspace& operator=(const ProgramWorkspace&) = delete;

  std::string expand(std::string_view command_template) const {
    std::string out(command_template);
    auto sub = [&](std::string_view key, const std::string& value) {
      for (std::size_t pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size()))
        out.replace(pos, key.size(), value);
    };
    sub("{source}", source_.string());
    sub("{dir}", dir_.string());
    return out;
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::filesystem::path source_;
};

}  // namespace autothink
