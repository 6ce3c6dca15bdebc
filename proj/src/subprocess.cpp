#include "caps/subprocess.hpp"

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

namespace caps {

namespace {

constexpr size_t kMaxCapturedBytes = 1 << 20;

double rusage_seconds(const struct rusage& usage) {
    return static_cast<double>(usage.ru_utime.tv_sec) + usage.ru_utime.tv_usec * 1e-6 +
           static_cast<double>(usage.ru_stime.tv_sec) + usage.ru_stime.tv_usec * 1e-6;
}

} // namespace

CommandResult run_command(const std::string& command, double timeout_seconds) {
    int pipe_fd[2];
    if (pipe(pipe_fd) != 0)
        throw std::runtime_error(std::string("run_command: pipe failed: ") + std::strerror(errno));

    const auto start = std::chrono::steady_clock::now();

    const pid_t pid = fork();
    if (pid < 0) {
        close(pipe_fd[0]);
        close(pipe_fd[1]);
        throw std::runtime_error(std::string("run_command: fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
        // Child: own process group so a timeout can kill the whole tree.
        setpgid(0, 0);
        close(pipe_fd[0]);
        dup2(pipe_fd[1], STDOUT_FILENO);
        dup2(pipe_fd[1], STDERR_FILENO);
        close(pipe_fd[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }

    close(pipe_fd[1]);
    fcntl(pipe_fd[0], F_SETFL, O_NONBLOCK);

    CommandResult result;
    bool child_done = false;
    int status = 0;
    struct rusage usage {};
    bool pipe_open = true;

    const auto deadline = timeout_seconds > 0.0
                              ? start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                            std::chrono::duration<double>(timeout_seconds))
                              : std::chrono::steady_clock::time_point::max();

    char buffer[4096];
    while (!child_done || pipe_open) {
        if (pipe_open) {
            struct pollfd pfd {pipe_fd[0], POLLIN, 0};
            poll(&pfd, 1, 50);
            ssize_t n;
            while ((n = read(pipe_fd[0], buffer, sizeof(buffer))) > 0) {
                const size_t room = kMaxCapturedBytes - std::min(kMaxCapturedBytes,
                                                                 result.output.size());
                if (room > 0)
                    result.output.append(buffer, std::min(static_cast<size_t>(n), room));
            }
            if (n == 0) {
                close(pipe_fd[0]);
                pipe_open = false;
            }
        } else if (!child_done) {
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        if (!child_done) {
            // wait4 reports the child's own CPU usage on reap.
            const pid_t waited = wait4(pid, &status, WNOHANG, &usage);
            if (waited == pid)
                child_done = true;
        }
        if (!child_done && std::chrono::steady_clock::now() >= deadline) {
            kill(-pid, SIGKILL);
            kill(pid, SIGKILL);
            wait4(pid, &status, 0, &usage);
            child_done = true;
            result.timed_out = true;
        }
    }

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.cpu_seconds = rusage_seconds(usage);
    if (result.timed_out)
        result.exit_code = -1;
    else if (WIFEXITED(status))
        result.exit_code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status))
        result.exit_code = 128 + WTERMSIG(status);
    return result;
}

bool command_exists(const std::string& name) {
    const std::string probe = "command -v " + name + " >/dev/null 2>&1";
    return std::system(probe.c_str()) == 0;
}

} // namespace caps
