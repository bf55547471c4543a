#pragma once

// Child process reached over its stdin/stdout, one line per message.

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <optional>
#include <string>

#include "error.hpp"

namespace ramp3d {

class LineProcess {
 public:
  /// Runs `command` through /bin/sh.
  explicit LineProcess(const std::string& command) {
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw Error(ErrorCode::kIoFailure, "pipe: " + std::string(std::strerror(errno)));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw Error(ErrorCode::kIoFailure, "pipe: " + std::string(std::strerror(errno)));
    }
    pid_ = ::fork();
    if (pid_ < 0) throw Error(ErrorCode::kIoFailure, "fork: " + std::string(std::strerror(errno)));
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    out_ = ::fdopen(to_child[1], "w");
    in_ = ::fdopen(from_child[0], "r");
  }

  LineProcess(const LineProcess&) = delete;
  LineProcess& operator=(const LineProcess&) = delete;
  ~LineProcess() { close(); }

  /// False when the child no longer reads its input.
  bool send(const std::string& line) {
    if (!out_) return false;
    const std::string data = line + "\n";
    return std::fwrite(data.data(), 1, data.size(), out_) == data.size() && std::fflush(out_) == 0;
  }

  /// Next line without its newline; nullopt once the child closed its output.
  std::optional<std::string> receive() {
    if (!in_) return std::nullopt;
    std::string line;
    int ch;
    while ((ch = std::fgetc(in_)) != EOF && ch != '\n') line.push_back(static_cast<char>(ch));
    if (ch == EOF && line.empty()) return std::nullopt;
    return line;
  }

  /// Sends `farewell` (if any), closes both pipes and reaps the child.
  /// Returns the exit status, or -1 when already closed.
  int close(const std::string& farewell = "") {
    if (out_) {
      if (!farewell.empty()) send(farewell);
      std::fclose(out_);
      out_ = nullptr;
    }
    if (in_) {
      std::fclose(in_);
      in_ = nullptr;
    }
    int status = -1;
    if (pid_ > 0) {
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
    return status;
  }

 private:
  pid_t pid_ = -1;
  std::FILE* out_ = nullptr;
  std::FILE* in_ = nullptr;
};

}  // namespace ramp3d
