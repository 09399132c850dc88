#include "factsum/transport.hpp"

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include "factsum/error.hpp"

namespace factsum::transport {

double effective_timeout(double configured_secs) {
    if (const char* env = std::getenv("FACTSUM_TIMEOUT_SECS")) {
        char* end = nullptr;
        const double v = std::strtod(env, &end);
        if (end != env && v > 0.0) return v;
    }
    return configured_secs;
}

std::string effective_llm_endpoint(const std::string& configured) {
    if (const char* env = std::getenv("FACTSUM_LLM_ENDPOINT")) {
        if (*env != '\0') return env;
    }
    return configured;
}

namespace {

std::vector<std::string> split_command(const std::string& cmd) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : cmd) {
        if (c == ' ') {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string call_process(const std::string& command, const std::string& request_line, double timeout_secs) {
    const auto argv_s = split_command(command);
    if (argv_s.empty()) throw Error(ErrorKind::Config, "empty process endpoint");

    int in_pipe[2];  // parent -> child stdin
    int out_pipe[2]; // child stdout -> parent
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
        throw Error(ErrorKind::Transport, "pipe() failed", std::strerror(errno));

    const pid_t pid = fork();
    if (pid < 0) throw Error(ErrorKind::Transport, "fork() failed", std::strerror(errno));
    if (pid == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        std::vector<char*> argv;
        for (const auto& s : argv_s) argv.push_back(const_cast<char*>(s.c_str()));
        argv.push_back(nullptr);
        execvp(argv[0], argv.data());
        _exit(127);
    }

    close(in_pipe[0]);
    close(out_pipe[1]);

    std::string payload = request_line;
    payload.push_back('\n');
    ssize_t off = 0;
    while (off < static_cast<ssize_t>(payload.size())) {
        const ssize_t n = write(in_pipe[1], payload.data() + off, payload.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            break; // child may have exited; the read below reports the failure
        }
        off += n;
    }
    close(in_pipe[1]);

    std::string response;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_secs);
    bool timed_out = false;
    for (;;) {
        const auto now = std::chrono::steady_clock::now();
        const int remaining_ms =
            static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
        if (remaining_ms <= 0) {
            timed_out = true;
            break;
        }
        pollfd fd{out_pipe[0], POLLIN, 0};
        const int pr = poll(&fd, 1, remaining_ms);
        if (pr < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (pr == 0) {
            timed_out = true;
            break;
        }
        char buf[4096];
        const ssize_t n = read(out_pipe[0], buf, sizeof(buf));
        if (n <= 0) break; // EOF
        response.append(buf, static_cast<std::size_t>(n));
        if (response.find('\n') != std::string::npos) break;
    }
    close(out_pipe[0]);
    if (timed_out) kill(pid, SIGKILL);
    int status = 0;
    waitpid(pid, &status, 0);

    if (timed_out)
        throw Error(ErrorKind::Transport, "process endpoint timed out after " + std::to_string(timeout_secs) + "s",
                    command);
    const auto nl = response.find('\n');
    if (nl != std::string::npos) response.resize(nl);
    if (response.empty())
        throw Error(ErrorKind::Transport, "process endpoint returned no response line", command);
    return response;
}

std::string call_http(const std::string& endpoint, const std::string& request_line, double timeout_secs) {
    // Split "http://host:port/path" into base and path.
    const auto scheme_end = endpoint.find("://");
    const auto path_start = endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const std::string base = path_start == std::string::npos ? endpoint : endpoint.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : endpoint.substr(path_start);

    httplib::Client client(base);
    const auto secs = static_cast<time_t>(timeout_secs);
    const auto usecs = static_cast<time_t>((timeout_secs - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    const auto res = client.Post(path, request_line, "application/json");
    if (!res)
        throw Error(ErrorKind::Transport, "http endpoint unreachable or timed out", endpoint);
    if (res->status != 200)
        throw Error(ErrorKind::Transport, "http endpoint returned status " + std::to_string(res->status), res->body);
    return res->body;
}

std::mutex g_inflight_mutex;
std::condition_variable g_inflight_cv;
int g_inflight = 0;
int g_inflight_max = 0;

} // namespace

std::string call_endpoint(const std::string& endpoint, const std::string& request_line, double timeout_secs) {
    const double timeout = effective_timeout(timeout_secs);
    if (endpoint.rfind("proc:", 0) == 0) return call_process(endpoint.substr(5), request_line, timeout);
    if (endpoint.rfind("http://", 0) == 0 || endpoint.rfind("https://", 0) == 0)
        return call_http(endpoint, request_line, timeout);
    throw Error(ErrorKind::Config, "unsupported endpoint descriptor: " + endpoint);
}

InFlightGuard::InFlightGuard(int max_in_flight) {
    std::unique_lock<std::mutex> lock(g_inflight_mutex);
    g_inflight_max = max_in_flight;
    g_inflight_cv.wait(lock, [&] { return g_inflight < max_in_flight; });
    ++g_inflight;
}

InFlightGuard::~InFlightGuard() {
    {
        std::lock_guard<std::mutex> lock(g_inflight_mutex);
        --g_inflight;
    }
    g_inflight_cv.notify_one();
}

} // namespace factsum::transport
