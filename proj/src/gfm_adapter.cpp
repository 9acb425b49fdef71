#include "lmd/gfm_adapter.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>
#include <thread>

#include "lmd/error.hpp"

namespace lmd {

namespace {

[[noreturn]] void unavailable(const std::string& why) {
  throw Error(ErrorCode::kScorerUnavailable, why);
}

void ignore_sigpipe() {
  static const bool once = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

void write_all(int fd, const std::string& data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      unavailable(std::string("write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

// Reads until a newline; bytes after it stay in `buffer`.
std::string read_line(int fd, std::string& buffer, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  char chunk[65536];
  for (;;) {
    if (auto pos = buffer.find('\n'); pos != std::string::npos) {
      std::string line = buffer.substr(0, pos);
      buffer.erase(0, pos + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) unavailable("timed out waiting for a reply");
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), INT32_MAX)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      unavailable(std::string("poll failed: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    const ssize_t n = ::read(fd, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      unavailable(std::string("read failed: ") + std::strerror(errno));
    }
    if (n == 0) unavailable("connection closed by the scorer");
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

}  // namespace

// ---------------------------------------------------------------------------
// ChildProcessTransport

ChildProcessTransport::ChildProcessTransport(std::string command) : command_(std::move(command)) {
  ignore_sigpipe();
}

ChildProcessTransport::~ChildProcessTransport() {
  // Closing stdin lets a well-behaved child exit on its own.
  close_fd(to_child_);
  if (pid_ > 0) {
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
        pid_ = -1;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }
  reset();
}

void ChildProcessTransport::start() {
  int in[2], out[2];
  if (::pipe2(in, O_CLOEXEC) != 0) unavailable("pipe failed");
  if (::pipe2(out, O_CLOEXEC) != 0) {
    ::close(in[0]);
    ::close(in[1]);
    unavailable("pipe failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in[0], in[1], out[0], out[1]}) ::close(fd);
    unavailable("fork failed");
  }
  if (pid == 0) {
    // Own process group, so reset() also reaches whatever the shell started.
    ::setpgid(0, 0);
    ::dup2(in[0], STDIN_FILENO);
    ::dup2(out[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(in[0]);
  ::close(out[1]);
  pid_ = pid;
  to_child_ = in[1];
  from_child_ = out[0];
  buffer_.clear();
}

std::string ChildProcessTransport::exchange(const std::string& line,
                                            std::chrono::milliseconds timeout) {
  if (pid_ < 0) start();
  write_all(to_child_, line + '\n');
  return read_line(from_child_, buffer_, timeout);
}

void ChildProcessTransport::reset() {
  close_fd(to_child_);
  close_fd(from_child_);
  if (pid_ > 0) {
    ::kill(-pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }
  pid_ = -1;
  buffer_.clear();
}

// ---------------------------------------------------------------------------
// SocketTransport

SocketTransport::SocketTransport(std::string host, std::uint16_t port)
    : host_(std::move(host)), port_(port) {
  ignore_sigpipe();
}

SocketTransport::~SocketTransport() { reset(); }

void SocketTransport::connect() {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  const std::string port = std::to_string(port_);
  if (const int rc = ::getaddrinfo(host_.c_str(), port.c_str(), &hints, &found); rc != 0) {
    unavailable("cannot resolve " + host_ + ": " + ::gai_strerror(rc));
  }
  for (addrinfo* a = found; a != nullptr; a = a->ai_next) {
    const int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
      fd_ = fd;
      break;
    }
    ::close(fd);
  }
  ::freeaddrinfo(found);
  if (fd_ < 0) unavailable("cannot connect to " + host_ + ":" + port);
  buffer_.clear();
}

std::string SocketTransport::exchange(const std::string& line, std::chrono::milliseconds timeout) {
  if (fd_ < 0) connect();
  write_all(fd_, line + '\n');
  return read_line(fd_, buffer_, timeout);
}

void SocketTransport::reset() {
  close_fd(fd_);
  buffer_.clear();
}

// ---------------------------------------------------------------------------
// SidecarServer

SidecarServer::SidecarServer(std::unique_ptr<Scorer> backend, std::string model,
                             std::size_t capacity)
    : backend_(std::move(backend)), model_(std::move(model)), capacity_(std::max<std::size_t>(capacity, 1)) {}

wire::Response SidecarServer::dispatch(const wire::Request& request) {
  wire::Response r;
  if (std::holds_alternative<wire::Ping>(request)) {
    r.model = model_;
  } else if (std::holds_alternative<wire::Shutdown>(request)) {
    shutdown_ = true;
  } else if (const auto* set = std::get_if<wire::SetContext>(&request)) {
    auto graph = std::make_shared<const ContextGraph>(wire::to_context(*set));
    std::erase_if(contexts_, [&](const auto& c) { return c.first == set->context_id; });
    contexts_.emplace_back(set->context_id, graph);
    while (contexts_.size() > capacity_) contexts_.pop_front();
    r.context_id = set->context_id;
    r.node_count = graph->node_count();
  } else {
    const auto& batch = std::get<wire::ScoreBatch>(request);
    auto it = std::find_if(contexts_.begin(), contexts_.end(),
                           [&](const auto& c) { return c.first == batch.context_id; });
    if (it == contexts_.end()) {
      r.ok = false;
      r.error = std::string(wire::kUnknownContext) + ": " + batch.context_id;
      return r;
    }
    backend_->set_context(it->second);
    r.scores = backend_->score_batch(batch.queries);
  }
  return r;
}

std::string SidecarServer::handle(const std::string& line) {
  try {
    return wire::serialize(dispatch(wire::parse_request(line)));
  } catch (const std::exception& e) {
    wire::Response r;
    r.ok = false;
    r.error = e.what();
    return wire::serialize(r);
  }
}

void SidecarServer::serve(std::istream& in, std::ostream& out) {
  std::string line;
  while (!shutdown_ && std::getline(in, line)) {
    if (line.empty()) continue;
    out << handle(line) << '\n' << std::flush;
  }
}

// ---------------------------------------------------------------------------
// SidecarScorer

SidecarScorer::SidecarScorer(std::unique_ptr<Transport> transport, SidecarOptions options)
    : transport_(std::move(transport)), options_(options) {
  if (!transport_) throw Error(ErrorCode::kInvalidArgument, "null transport");
  options_.max_attempts = std::max(options_.max_attempts, 1);
  options_.max_batch = std::max<std::size_t>(options_.max_batch, 1);
}

SidecarScorer::~SidecarScorer() {
  if (!connected_) return;
  try {
    transport_->exchange(wire::serialize(wire::Shutdown{}), std::chrono::milliseconds(1000));
  } catch (...) {
  }
}

template <typename Fn>
auto SidecarScorer::with_retry(Fn&& fn) -> decltype(fn()) {
  auto backoff = options_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      if (!connected_) handshake();
      return fn();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kScorerUnavailable) throw;
      transport_->reset();
      connected_ = false;
      uploaded_.clear();
      if (attempt >= options_.max_attempts) {
        throw Error(ErrorCode::kScorerUnavailable,
                    std::string(e.what()) + " (after " + std::to_string(attempt) + " attempts)");
      }
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
}

wire::Response SidecarScorer::call(const wire::Request& request) {
  const auto timeout = std::holds_alternative<wire::Ping>(request) ? options_.handshake_timeout
                                                                   : options_.request_timeout;
  return wire::parse_response(transport_->exchange(wire::serialize(request), timeout));
}

void SidecarScorer::handshake() {
  const wire::Response r = call(wire::Ping{});
  if (!r.ok) unavailable("scorer refused the handshake: " + r.error);
  if (!r.model) {
    throw Error(ErrorCode::kScorerOutputInvalid, "handshake reply carries no model tag");
  }
  model_ = *r.model;
  connected_ = true;
}

const std::string& SidecarScorer::model() {
  with_retry([] { return 0; });
  return model_;
}

void SidecarScorer::upload() {
  const wire::Response r = call(wire::make_set_context(*context_));
  if (!r.ok) unavailable("context upload rejected: " + r.error);
  if (r.node_count && *r.node_count != context_->node_count()) {
    throw Error(ErrorCode::kScorerOutputInvalid,
                "scorer acknowledged " + std::to_string(*r.node_count) + " nodes, sent " +
                    std::to_string(context_->node_count()));
  }
  ++uploads_;
  uploaded_.push_back(context_id_);
  if (uploaded_.size() > 4) uploaded_.pop_front();
}

void SidecarScorer::set_context(std::shared_ptr<const ContextGraph> context) {
  if (!context || context->empty()) {
    throw Error(ErrorCode::kWarmUp, "empty context graphs are never uploaded");
  }
  context_ = std::move(context);
  context_id_ = wire::context_id(*context_);
  if (std::find(uploaded_.begin(), uploaded_.end(), context_id_) != uploaded_.end()) return;
  with_retry([this] {
    upload();
    return 0;
  });
}

ScoreMatrix SidecarScorer::score_chunk(std::span<const ScoreQuery> queries) {
  wire::ScoreBatch batch{context_id_, {queries.begin(), queries.end()}};
  wire::Response r = with_retry([&] {
    if (std::find(uploaded_.begin(), uploaded_.end(), context_id_) == uploaded_.end()) upload();
    wire::Response reply = call(batch);
    if (!reply.ok && reply.error.starts_with(wire::kUnknownContext)) {
      upload();
      reply = call(batch);
    }
    return reply;
  });
  // An error reply is the scorer's own verdict on this batch; retrying
  // would only repeat it.
  if (!r.ok) unavailable("scorer reported an error: " + r.error);
  if (!r.scores) throw Error(ErrorCode::kScorerOutputInvalid, "reply carries no scores");
  if (r.scores->size() != queries.size()) {
    throw Error(ErrorCode::kScorerOutputInvalid,
                "scorer returned " + std::to_string(r.scores->size()) + " rows for " +
                    std::to_string(queries.size()) + " queries");
  }
  for (const auto& row : *r.scores) {
    if (row.size() != context_->node_count()) {
      throw Error(ErrorCode::kScorerOutputInvalid,
                  "score row has " + std::to_string(row.size()) + " entries, context has " +
                      std::to_string(context_->node_count()) + " nodes");
    }
  }
  return std::move(*r.scores);
}

ScoreMatrix SidecarScorer::score_batch(std::span<const ScoreQuery> queries) {
  if (!context_) throw Error(ErrorCode::kInvalidArgument, "no context set");
  ScoreMatrix rows;
  rows.reserve(queries.size());
  for (std::size_t begin = 0; begin < queries.size(); begin += options_.max_batch) {
    const std::size_t n = std::min(options_.max_batch, queries.size() - begin);
    for (auto& row : score_chunk(queries.subspan(begin, n))) rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace lmd
