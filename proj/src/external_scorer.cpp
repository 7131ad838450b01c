#include "judgekit/external_scorer.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "json.hpp"
#include "judgekit/adapter.hpp"
#include "judgekit/errors.hpp"

namespace judgekit {

ExternalScorer::ExternalScorer(ExternalScorerOptions options) : options_(std::move(options)) {
  if (options_.command.empty()) throw ScorerError("external scorer command is empty");
  if (options_.model_id.empty()) throw ScorerError("external scorer needs a model id");
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0) throw ScorerError(std::string("pipe: ") + std::strerror(errno));
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw ScorerError(std::string("pipe: ") + std::strerror(errno));
  }
  std::vector<char*> argv;
  for (auto& a : options_.command) argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_ = fork();
  if (pid_ < 0) throw ScorerError(std::string("fork: ") + std::strerror(errno));
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  fcntl(to_child_, F_SETFD, FD_CLOEXEC);
  fcntl(from_child_, F_SETFD, FD_CLOEXEC);
  signal(SIGPIPE, SIG_IGN);
}

ExternalScorer::~ExternalScorer() { shutdown(); }

void ExternalScorer::shutdown() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      usleep(2000);
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

std::string ExternalScorer::read_line() const {
  const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
  for (;;) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw ScorerError("external scorer timed out");
    pollfd pfd{from_child_, POLLIN, 0};
    const int rc = poll(&pfd, 1, static_cast<int>(left.count()));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw ScorerError(std::string("poll: ") + std::strerror(errno));
    }
    if (rc == 0) throw ScorerError("external scorer timed out");
    char chunk[4096];
    const ssize_t got = read(from_child_, chunk, sizeof(chunk));
    if (got < 0) {
      if (errno == EINTR) continue;
      throw ScorerError(std::string("read: ") + std::strerror(errno));
    }
    if (got == 0) throw ScorerError("external scorer closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(got));
  }
}

double ExternalScorer::request(std::string_view query, std::string_view doc,
                               const std::optional<std::string>& adapter_ref) const {
  std::lock_guard<std::mutex> lock(mutex_);
  // After a timeout the stream may still hold a stale answer; do not reuse it.
  if (broken_) throw ScorerError("external scorer is unusable after an earlier failure");
  const long id = next_id_++;
  nlohmann::json req;
  req["id"] = id;
  req["query"] = query;
  req["doc"] = doc;
  req["adapter"] = adapter_ref ? nlohmann::json(*adapter_ref) : nlohmann::json(nullptr);
  const std::string line = req.dump() + "\n";
  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t n = write(to_child_, line.data() + sent, line.size() - sent);
    if (n < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw ScorerError(std::string("write to external scorer: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
  std::string reply;
  try {
    reply = read_line();
  } catch (const ScorerError&) {
    broken_ = true;
    throw;
  }
  {
    nlohmann::json res;
    try {
      res = nlohmann::json::parse(reply);
    } catch (const nlohmann::json::exception&) {
      throw ScorerError("malformed scorer response: " + reply);
    }
    if (!res.is_object() || !res.contains("id") || res["id"] != id) {
      throw ScorerError("scorer response id mismatch: " + reply);
    }
    if (res.contains("error")) throw ScorerError("scorer error: " + res["error"].dump());
    if (!res.contains("score") || !res["score"].is_number()) {
      throw ScorerError("scorer response lacks a numeric score: " + reply);
    }
    const double s = res["score"].get<double>();
    if (!(s >= 0.0 && s <= 1.0)) throw ScorerError("scorer returned out-of-range score " + reply);
    return s;
  }
}

double ExternalScorer::score(std::string_view query, std::string_view doc) const {
  return request(query, doc, std::nullopt);
}

double ExternalScorer::score(std::string_view query, std::string_view doc,
                             const LowRankAdapter& adapter) const {
  check_attach(*this, adapter);
  return request(query, doc, adapter.source_path.empty() ? adapter.topic_id : adapter.source_path);
}

}  // namespace judgekit
