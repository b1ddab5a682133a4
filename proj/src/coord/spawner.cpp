#include "teleopforge/coord/spawner.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <stdexcept>
#include <thread>

#include "teleopforge/teleop/server.hpp"

extern char** environ;

namespace teleopforge::coord {

using namespace std::chrono_literals;

std::filesystem::path self_executable() { return std::filesystem::read_symlink("/proc/self/exe"); }

namespace {

class ProcessHandle : public SessionHandle {
 public:
  ProcessHandle(pid_t pid, std::uint16_t port) : pid_(pid), port_(port) {}
  ~ProcessHandle() override { terminate(); }

  bool alive() override {
    if (reaped_) return false;
    int status = 0;
    if (waitpid(pid_, &status, WNOHANG) == pid_) reaped_ = true;
    return !reaped_;
  }

  void terminate() override {
    if (!alive()) return;
    kill(pid_, SIGTERM);
    for (int i = 0; i < 40 && alive(); ++i) std::this_thread::sleep_for(50ms);
    if (alive()) {
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
      reaped_ = true;
    }
  }

  std::uint16_t port() const override { return port_; }
  void set_port(std::uint16_t p) { port_ = p; }

 private:
  pid_t pid_;
  std::uint16_t port_;
  bool reaped_ = false;
};

class ThreadHandle : public SessionHandle {
 public:
  explicit ThreadHandle(std::unique_ptr<teleop::TeleopServer> server) : server_(std::move(server)) {
    port_ = server_->port();
    thread_ = std::thread([this] {
      server_->run();
      finished_ = true;
    });
  }
  ~ThreadHandle() override { terminate(); }

  bool alive() override { return !finished_; }
  void terminate() override {
    server_->stop();
    if (thread_.joinable()) thread_.join();
  }
  std::uint16_t port() const override { return port_; }

 private:
  std::unique_ptr<teleop::TeleopServer> server_;
  std::thread thread_;
  std::atomic<bool> finished_{false};
  std::uint16_t port_;
};

}  // namespace

ProcessSpawner::ProcessSpawner(std::filesystem::path executable, std::vector<std::string> extra_args)
    : executable_(std::move(executable)), extra_args_(std::move(extra_args)) {}

std::unique_ptr<SessionHandle> ProcessSpawner::spawn(const SpawnRequest& r) {
  std::vector<std::string> args{executable_.string(), "teleop",        "--port",       "0",
                                "--task",             r.task,          "--token",      r.token,
                                "--user",             r.user,          "--session-id", r.session_id,
                                "--storage",          r.storage.string()};
  if (!r.coordinator.empty()) {
    args.push_back("--coordinator");
    args.push_back(r.coordinator);
  }
  args.insert(args.end(), extra_args_.begin(), extra_args_.end());
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  int fds[2];
  if (pipe2(fds, O_CLOEXEC) != 0) throw std::runtime_error("pipe failed");
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  // The parent may block or ignore signals for its own handling; the child starts clean.
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  sigset_t none, reset;
  sigemptyset(&none);
  sigemptyset(&reset);
  for (int sig : {SIGINT, SIGTERM, SIGPIPE}) sigaddset(&reset, sig);
  posix_spawnattr_setsigmask(&attr, &none);
  posix_spawnattr_setsigdefault(&attr, &reset);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETSIGMASK | POSIX_SPAWN_SETSIGDEF);
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, executable_.c_str(), &actions, &attr, argv.data(), environ);
  posix_spawnattr_destroy(&attr);
  posix_spawn_file_actions_destroy(&actions);
  close(fds[1]);
  if (rc != 0) {
    close(fds[0]);
    throw std::runtime_error("cannot start " + executable_.string() + ": " + std::strerror(rc));
  }
  auto handle = std::make_unique<ProcessHandle>(pid, 0);

  // Read "LISTENING <port>\n".
  std::string line;
  const auto deadline = std::chrono::steady_clock::now() + 15s;
  while (line.find('\n') == std::string::npos && std::chrono::steady_clock::now() < deadline) {
    pollfd p{fds[0], POLLIN, 0};
    if (poll(&p, 1, 100) <= 0) continue;
    char buf[128];
    const auto n = read(fds[0], buf, sizeof buf);
    if (n <= 0) break;
    line.append(buf, static_cast<std::size_t>(n));
  }
  close(fds[0]);
  unsigned port = 0;
  if (std::sscanf(line.c_str(), "LISTENING %u", &port) != 1 || port == 0 || port > 65535) {
    handle->terminate();
    throw std::runtime_error("teleop server did not report a port (got '" + line + "')");
  }
  handle->set_port(static_cast<std::uint16_t>(port));
  return handle;
}

InProcessSpawner::InProcessSpawner(bool headless, std::function<void(const std::string&)> log)
    : headless_(headless), log_(std::move(log)) {}

std::unique_ptr<SessionHandle> InProcessSpawner::spawn(const SpawnRequest& r) {
  teleop::ServerOptions opt;
  opt.session.task = sim::builtin_task(sim::parse_task_kind(r.task));
  opt.session.user = r.user;
  opt.session.storage = r.storage;
  opt.session.seed = std::hash<std::string>{}(r.session_id);
  opt.token = r.token;
  opt.session_id = r.session_id;
  opt.coordinator = r.coordinator;
  opt.headless = headless_;
  if (log_) {
    opt.log = [log = log_, id = r.session_id.substr(0, 8)](const std::string& m) { log("[" + id + "] " + m); };
  }
  return std::make_unique<ThreadHandle>(std::make_unique<teleop::TeleopServer>(std::move(opt)));
}

}  // namespace teleopforge::coord
