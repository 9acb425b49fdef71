#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lmd/scoring.hpp"
#include "lmd/wire.hpp"

namespace lmd {

/// A strict request/response line channel to a scoring process. Failures
/// to deliver a request or read its reply throw Error(kScorerUnavailable).
class Transport {
 public:
  virtual ~Transport() = default;
  /// Sends one line (without newline) and returns the reply line, waiting
  /// at most `timeout` for it.
  virtual std::string exchange(const std::string& line, std::chrono::milliseconds timeout) = 0;
  /// Drops the current connection; the next exchange reconnects.
  virtual void reset() = 0;
};

/// Launches `command` through /bin/sh and talks over its stdin/stdout.
class ChildProcessTransport final : public Transport {
 public:
  explicit ChildProcessTransport(std::string command);
  ~ChildProcessTransport() override;

  std::string exchange(const std::string& line, std::chrono::milliseconds timeout) override;
  void reset() override;

 private:
  void start();

  std::string command_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

/// TCP connection to host:port.
class SocketTransport final : public Transport {
 public:
  SocketTransport(std::string host, std::uint16_t port);
  ~SocketTransport() override;

  std::string exchange(const std::string& line, std::chrono::milliseconds timeout) override;
  void reset() override;

 private:
  void connect();

  std::string host_;
  std::uint16_t port_;
  int fd_ = -1;
  std::string buffer_;
};

/// In-process transport; each exchange calls `handler` directly.
class LoopbackTransport final : public Transport {
 public:
  explicit LoopbackTransport(std::function<std::string(const std::string&)> handler)
      : handler_(std::move(handler)) {}

  std::string exchange(const std::string& line, std::chrono::milliseconds) override {
    return handler_(line);
  }
  void reset() override {}

 private:
  std::function<std::string(const std::string&)> handler_;
};

/// Server side of the protocol around any Scorer. Keeps the most recently
/// uploaded contexts (up to `capacity`) by id.
class SidecarServer {
 public:
  SidecarServer(std::unique_ptr<Scorer> backend, std::string model, std::size_t capacity = 8);

  /// Handles one request line and returns the reply line.
  std::string handle(const std::string& line);
  bool shutdown_requested() const { return shutdown_; }

  /// Reads requests from `in` until EOF or shutdown, one reply per line.
  void serve(std::istream& in, std::ostream& out);

 private:
  wire::Response dispatch(const wire::Request& request);

  std::unique_ptr<Scorer> backend_;
  std::string model_;
  std::size_t capacity_;
  std::deque<std::pair<std::string, std::shared_ptr<const ContextGraph>>> contexts_;
  bool shutdown_ = false;
};

struct SidecarOptions {
  std::chrono::milliseconds handshake_timeout{10000};
  std::chrono::milliseconds request_timeout{600000};
  /// Attempts per operation before giving up with scorer-unavailable.
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{50};
  /// Queries per score_batch message; larger batches are split.
  std::size_t max_batch = 256;
};

/// Scorer backed by an external process speaking the wire protocol.
/// Performs the ping handshake on first use, uploads each distinct context
/// once (identified by content hash), splits large batches, and validates
/// every reply.
class SidecarScorer final : public Scorer {
 public:
  SidecarScorer(std::unique_ptr<Transport> transport, SidecarOptions options = {});
  ~SidecarScorer() override;

  /// Throws Error(kWarmUp) for an empty context: nothing is transmitted.
  void set_context(std::shared_ptr<const ContextGraph> context) override;
  ScoreMatrix score_batch(std::span<const ScoreQuery> queries) override;

  /// Model tag from the handshake; performs it if needed.
  const std::string& model();
  std::uint64_t uploads() const { return uploads_; }
  const std::string& context_id() const { return context_id_; }

 private:
  template <typename Fn>
  auto with_retry(Fn&& fn) -> decltype(fn());

  void handshake();
  void upload();
  ScoreMatrix score_chunk(std::span<const ScoreQuery> queries);
  wire::Response call(const wire::Request& request);

  std::unique_ptr<Transport> transport_;
  SidecarOptions options_;
  bool connected_ = false;
  std::string model_;
  std::shared_ptr<const ContextGraph> context_;
  std::string context_id_;
  std::deque<std::string> uploaded_;  // ids the server acknowledged, newest last
  std::uint64_t uploads_ = 0;
};

}  // namespace lmd
