#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>
#include <thread>

#include "lmd/error.hpp"
#include "lmd/gfm_adapter.hpp"
#include "lmd/native_scorer.hpp"
#include "lmd/wire.hpp"
#include "support.hpp"

using namespace lmd;
using namespace lmd::testing;
using namespace std::chrono_literals;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvariantViolation;
}

std::vector<std::uint32_t> random_ids(std::mt19937_64& rng, std::size_t max_len) {
  std::vector<std::uint32_t> out(rng() % (max_len + 1));
  for (auto& x : out) x = static_cast<std::uint32_t>(rng());
  return out;
}

std::string random_text(std::mt19937_64& rng) {
  static const std::vector<std::string> alphabet = {"a", "b", "X", "-", ":", "\"", "\\",
                                                   "/", " ", "\t", "{", "]", ",", "\xc3\xa9"};
  std::string s;
  for (std::size_t n = rng() % 12; n > 0; --n) s += alphabet[rng() % alphabet.size()];
  return s;
}

wire::Request random_request(std::mt19937_64& rng) {
  switch (rng() % 4) {
    case 0: {
      wire::SetContext m;
      m.context_id = random_text(rng);
      m.nodes = random_ids(rng, 8);
      for (std::size_t n = rng() % 6; n > 0; --n) {
        m.edges.push_back({static_cast<std::uint32_t>(rng()), static_cast<std::uint32_t>(rng()),
                           static_cast<std::uint32_t>(rng())});
      }
      m.relations = random_ids(rng, 4);
      return m;
    }
    case 1: {
      wire::ScoreBatch m;
      m.context_id = random_text(rng);
      for (std::size_t n = rng() % 6; n > 0; --n) {
        m.queries.push_back({EntityId{static_cast<std::uint32_t>(rng())},
                             RelationId{static_cast<std::uint32_t>(rng())},
                             rng() % 2 ? Direction::kTail : Direction::kHead});
      }
      return m;
    }
    case 2: return wire::Ping{};
    default: return wire::Shutdown{};
  }
}

wire::Response random_response(std::mt19937_64& rng) {
  wire::Response r;
  r.ok = rng() % 4 != 0;
  if (!r.ok) {
    r.error = random_text(rng);
    return r;
  }
  if (rng() % 2) r.model = random_text(rng);
  if (rng() % 2) r.context_id = random_text(rng);
  if (rng() % 2) r.node_count = rng() >> 12;
  if (rng() % 2) {
    ScoreMatrix m(rng() % 4);
    for (auto& row : m) {
      row.resize(rng() % 5);
      for (double& x : row) {
        // Raw bit patterns cover subnormals and extreme exponents.
        std::uint64_t bits = rng();
        std::memcpy(&x, &bits, sizeof x);
        if (!std::isfinite(x)) x = uniform(rng, -1e6, 1e6);
      }
    }
    r.scores = std::move(m);
  }
  return r;
}

std::shared_ptr<const ContextGraph> sample_context(std::uint64_t seed, std::size_t edges = 60) {
  std::mt19937_64 rng(seed);
  return context_of(random_edges(rng, edges, 20, 4));
}

// Loopback pair: a server around the native scorer plus a counter of the
// messages it received, by op.
struct Loop {
  SidecarServer server{std::make_unique<NativeScorer>(), "native-test", 2};
  std::map<std::string, int> seen;
  std::function<std::string(const std::string&)> tamper;

  std::unique_ptr<Transport> transport() {
    return std::make_unique<LoopbackTransport>([this](const std::string& line) {
      const auto request = wire::parse_request(line);
      const char* ops[] = {"set_context", "score_batch", "ping", "shutdown"};
      ++seen[ops[request.index()]];
      if (tamper) {
        std::string reply = tamper(line);
        if (!reply.empty()) return reply;
      }
      return server.handle(line);
    });
  }
};

SidecarOptions fast_options() {
  SidecarOptions o;
  o.handshake_timeout = 5000ms;
  o.request_timeout = 5000ms;
  o.initial_backoff = 1ms;
  return o;
}

std::string fake(const std::string& args) { return std::string(FAKE_SIDECAR_PATH) + " " + args; }

}  // namespace

// ---------------------------------------------------------------------------
// Serialization

TEST(Wire, RequestRoundTrip) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10000; ++i) {
    const wire::Request r = random_request(rng);
    const std::string line = wire::serialize(r);
    ASSERT_EQ(line.find('\n'), std::string::npos);
    ASSERT_EQ(wire::parse_request(line), r) << line;
  }
}

TEST(Wire, ResponseRoundTrip) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10000; ++i) {
    const wire::Response r = random_response(rng);
    const std::string line = wire::serialize(r);
    ASSERT_EQ(line.find('\n'), std::string::npos);
    ASSERT_EQ(wire::parse_response(line), r) << line;
  }
}

TEST(Wire, MessageLayout) {
  wire::SetContext set;
  set.context_id = "ctx-1";
  set.nodes = {1, 2};
  set.edges = {{{1, 0, 2}}};
  set.relations = {0};
  EXPECT_EQ(wire::serialize(set),
            R"({"op":"set_context","nodes":[1,2],"edges":[[1,0,2]],"relations":[0],"context_id":"ctx-1"})");
  wire::ScoreBatch batch{"ctx-1", {{EntityId{3}, RelationId{1}, Direction::kHead}}};
  EXPECT_EQ(wire::serialize(batch),
            R"({"op":"score_batch","context_id":"ctx-1","queries":[{"head":3,"rel":1,"direction":"head"}]})");
  EXPECT_EQ(wire::serialize(wire::Ping{}), R"({"op":"ping"})");
  wire::Response fail;
  fail.ok = false;
  fail.error = "boom";
  EXPECT_EQ(wire::serialize(fail), R"({"ok":false,"error":"boom"})");
}

TEST(Wire, MalformedRequests) {
  for (const char* line : {"", "not json", "[]", R"({"op":"dance"})", R"({"nodes":[]})",
                           R"({"op":"set_context","nodes":[-1],"edges":[],"relations":[],"context_id":"c"})",
                           R"({"op":"set_context","nodes":[1],"edges":[[1,2]],"relations":[],"context_id":"c"})",
                           R"({"op":"score_batch","context_id":"c","queries":[{"head":1,"rel":0,"direction":"up"}]})",
                           R"({"op":"score_batch","queries":[]})"}) {
    EXPECT_EQ(code_of([&] { wire::parse_request(line); }), ErrorCode::kInputError) << line;
  }
}

TEST(Wire, MalformedResponses) {
  for (const char* line : {"", "nope", R"({"scores":[[1]]})", R"({"ok":"yes"})",
                           R"({"ok":true,"scores":[[1,"x"]]})", R"({"ok":true,"scores":[[null]]})",
                           R"({"ok":true,"scores":[1,2]})", R"({"ok":true,"scores":[[1e999]]})"}) {
    EXPECT_EQ(code_of([&] { wire::parse_response(line); }), ErrorCode::kScorerOutputInvalid)
        << line;
  }
}

TEST(Wire, ContextMessageRebuildsTheSameGraph) {
  const auto ctx = sample_context(5);
  const wire::SetContext m = wire::make_set_context(*ctx);
  EXPECT_EQ(m.context_id.size(), 20u);
  EXPECT_EQ(m.context_id.rfind("ctx-", 0), 0u);
  const ContextGraph back = wire::to_context(m);
  EXPECT_EQ(back.content_hash(), ctx->content_hash());
  EXPECT_EQ(wire::context_id(back), m.context_id);
}

// ---------------------------------------------------------------------------
// Server

TEST(SidecarServer, AnswersEveryOp) {
  SidecarServer server(std::make_unique<NativeScorer>(), "m");
  EXPECT_EQ(wire::parse_response(server.handle(R"({"op":"ping"})")).model, "m");
  const auto ctx = sample_context(1);
  const auto ack = wire::parse_response(server.handle(wire::serialize(wire::make_set_context(*ctx))));
  EXPECT_EQ(ack.node_count, ctx->node_count());
  const auto bad = wire::parse_response(server.handle("garbage"));
  EXPECT_FALSE(bad.ok);
  const auto unknown = wire::parse_response(
      server.handle(wire::serialize(wire::ScoreBatch{"ctx-none", {}})));
  EXPECT_FALSE(unknown.ok);
  EXPECT_EQ(unknown.error.rfind(wire::kUnknownContext, 0), 0u);
  server.handle(R"({"op":"shutdown"})");
  EXPECT_TRUE(server.shutdown_requested());
}

// ---------------------------------------------------------------------------
// Client over loopback

TEST(SidecarScorer, MatchesInProcessScorerBitwise) {
  Loop loop;
  SidecarScorer remote(loop.transport(), fast_options());
  NativeScorer local;
  std::mt19937_64 rng(7);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ctx = sample_context(seed);
    const auto edges = random_edges(rng, 40, 22, 5);
    const auto a = score_side(edges, ctx, remote);
    const auto b = score_side(edges, ctx, local);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      ASSERT_EQ(*a[i].value, *b[i].value);
      ASSERT_EQ(a[i].flags, b[i].flags);
    }
  }
  EXPECT_EQ(remote.model(), "native-test");
  EXPECT_EQ(loop.seen["ping"], 1);
}

TEST(SidecarScorer, UploadsEachContextOnce) {
  Loop loop;
  SidecarScorer scorer(loop.transport(), fast_options());
  const auto a = sample_context(1);
  const auto a_again = sample_context(1);
  const auto b = sample_context(2);
  scorer.set_context(a);
  scorer.set_context(a_again);
  scorer.set_context(b);
  scorer.set_context(a);
  EXPECT_EQ(scorer.uploads(), 2u);
  EXPECT_EQ(loop.seen["set_context"], 2);
  EXPECT_EQ(scorer.context_id(), wire::context_id(*a));
}

TEST(SidecarScorer, SplitsLargeBatches) {
  Loop loop;
  SidecarOptions options = fast_options();
  options.max_batch = 4;
  SidecarScorer scorer(loop.transport(), options);
  const auto ctx = sample_context(3);
  scorer.set_context(ctx);
  std::vector<ScoreQuery> queries;
  for (EntityId n : ctx->nodes()) queries.push_back({n, rel(0), Direction::kTail});
  const ScoreMatrix rows = scorer.score_batch(queries);
  EXPECT_EQ(rows.size(), queries.size());
  EXPECT_EQ(loop.seen["score_batch"], static_cast<int>((queries.size() + 3) / 4));
}

TEST(SidecarScorer, EmptyContextIsNeverTransmitted) {
  Loop loop;
  SidecarScorer scorer(loop.transport(), fast_options());
  EXPECT_EQ(code_of([&] { scorer.set_context(std::make_shared<const ContextGraph>()); }),
            ErrorCode::kWarmUp);
  EXPECT_TRUE(loop.seen.empty());
}

TEST(SidecarScorer, ReuploadsEvictedContext) {
  Loop loop;  // server keeps two contexts
  SidecarScorer scorer(loop.transport(), fast_options());
  const auto a = sample_context(1), b = sample_context(2), c = sample_context(3);
  scorer.set_context(a);
  scorer.set_context(b);
  scorer.set_context(c);  // server forgets a
  scorer.set_context(a);  // client still believes a is uploaded
  const auto row = scorer.score_tails(a->nodes()[0], a->relations()[0]);
  EXPECT_EQ(row.size(), a->node_count());
  EXPECT_EQ(scorer.uploads(), 4u);
}

TEST(SidecarScorer, ErrorReplyIsUnavailableWithoutRetry) {
  Loop loop;
  loop.tamper = [](const std::string& line) -> std::string {
    return line.find("score_batch") != std::string::npos ? R"({"ok":false,"error":"oom"})" : "";
  };
  SidecarScorer scorer(loop.transport(), fast_options());
  const auto ctx = sample_context(1);
  scorer.set_context(ctx);
  EXPECT_EQ(code_of([&] { scorer.score_tails(ctx->nodes()[0], rel(0)); }),
            ErrorCode::kScorerUnavailable);
  EXPECT_EQ(loop.seen["score_batch"], 1);
}

TEST(SidecarScorer, WrongShapeIsInvalidOutput) {
  Loop loop;
  loop.tamper = [](const std::string& line) -> std::string {
    return line.find("score_batch") != std::string::npos ? R"({"ok":true,"scores":[[0.5]]})" : "";
  };
  SidecarScorer scorer(loop.transport(), fast_options());
  const auto ctx = sample_context(1);
  scorer.set_context(ctx);
  EXPECT_EQ(code_of([&] { scorer.score_tails(ctx->nodes()[0], rel(0)); }),
            ErrorCode::kScorerOutputInvalid);
}

TEST(SidecarScorer, TransientFailuresAreRetried) {
  Loop loop;
  int failures = 2;
  loop.tamper = [&](const std::string& line) -> std::string {
    if (line.find("score_batch") != std::string::npos && failures-- > 0) {
      throw Error(ErrorCode::kScorerUnavailable, "connection reset");
    }
    return "";
  };
  SidecarScorer scorer(loop.transport(), fast_options());
  const auto ctx = sample_context(1);
  scorer.set_context(ctx);
  EXPECT_EQ(scorer.score_tails(ctx->nodes()[0], rel(0)).size(), ctx->node_count());
  // Each reconnect repeats the handshake and the upload.
  EXPECT_EQ(loop.seen["ping"], 3);
  EXPECT_EQ(loop.seen["set_context"], 3);
}

TEST(SidecarScorer, PersistentFailureGivesUp) {
  Loop loop;
  loop.tamper = [](const std::string&) -> std::string {
    throw Error(ErrorCode::kScorerUnavailable, "down");
  };
  SidecarOptions options = fast_options();
  options.max_attempts = 4;
  SidecarScorer scorer(loop.transport(), options);
  EXPECT_EQ(code_of([&] { scorer.set_context(sample_context(1)); }),
            ErrorCode::kScorerUnavailable);
  EXPECT_EQ(loop.seen["ping"], 4);
}

// ---------------------------------------------------------------------------
// Child process

class ChildProcess : public ::testing::Test {
 protected:
  std::unique_ptr<SidecarScorer> connect(const std::string& args, int attempts = 2) {
    SidecarOptions o = fast_options();
    o.max_attempts = attempts;
    o.request_timeout = 1500ms;
    return std::make_unique<SidecarScorer>(std::make_unique<ChildProcessTransport>(fake(args)), o);
  }
  ErrorCode score_with(const std::string& args) {
    auto scorer = connect(args);
    const auto ctx = sample_context(9);
    return code_of([&] {
      scorer->set_context(ctx);
      scorer->score_tails(ctx->nodes()[0], rel(0));
    });
  }
};

TEST_F(ChildProcess, ScoresLikeTheInProcessScorer) {
  auto remote = connect("ok");
  NativeScorer local;
  std::mt19937_64 rng(4);
  const auto ctx = sample_context(4);
  const auto edges = random_edges(rng, 50, 22, 5);
  const auto a = score_side(edges, ctx, *remote);
  const auto b = score_side(edges, ctx, local);
  for (std::size_t i = 0; i < edges.size(); ++i) ASSERT_EQ(*a[i].value, *b[i].value);
  EXPECT_EQ(remote->model(), "fake-ok");
}

TEST_F(ChildProcess, InvalidOutputs) {
  EXPECT_EQ(score_with("nan"), ErrorCode::kScorerOutputInvalid);
  EXPECT_EQ(score_with("short"), ErrorCode::kScorerOutputInvalid);
  EXPECT_EQ(score_with("rows"), ErrorCode::kScorerOutputInvalid);
  EXPECT_EQ(score_with("malformed"), ErrorCode::kScorerOutputInvalid);
  EXPECT_EQ(score_with("no-model"), ErrorCode::kScorerOutputInvalid);
}

TEST_F(ChildProcess, Unavailable) {
  EXPECT_EQ(score_with("crash"), ErrorCode::kScorerUnavailable);
  EXPECT_EQ(score_with("refuse"), ErrorCode::kScorerUnavailable);
  EXPECT_EQ(score_with("error"), ErrorCode::kScorerUnavailable);
  EXPECT_EQ(score_with("silent"), ErrorCode::kScorerUnavailable);
  auto missing = std::make_unique<SidecarScorer>(
      std::make_unique<ChildProcessTransport>("/nonexistent/scorer"), fast_options());
  EXPECT_EQ(code_of([&] { missing->model(); }), ErrorCode::kScorerUnavailable);
}

TEST_F(ChildProcess, RecoversFromOneCrash) {
  const auto marker = std::filesystem::temp_directory_path() /
                      ("lmd-crash-" + std::to_string(::getpid()));
  std::filesystem::remove(marker);
  auto scorer = connect("crash-once " + marker.string());
  const auto ctx = sample_context(2);
  scorer->set_context(ctx);
  EXPECT_EQ(scorer->score_tails(ctx->nodes()[0], rel(0)).size(), ctx->node_count());
  EXPECT_TRUE(std::filesystem::exists(marker));
  EXPECT_EQ(scorer->uploads(), 2u);
  std::filesystem::remove(marker);
}

TEST_F(ChildProcess, ForgottenContextIsUploadedAgain) {
  auto scorer = connect("forget");
  const auto ctx = sample_context(6);
  scorer->set_context(ctx);
  EXPECT_EQ(scorer->score_tails(ctx->nodes()[0], rel(0)).size(), ctx->node_count());
  EXPECT_EQ(scorer->uploads(), 2u);
}

TEST_F(ChildProcess, ServeNativeSubcommand) {
  SidecarScorer remote(
      std::make_unique<ChildProcessTransport>(std::string(LMDETECT_PATH) + " serve-native"),
      fast_options());
  NativeScorer local;
  std::mt19937_64 rng(8);
  const auto ctx = sample_context(8);
  const auto edges = random_edges(rng, 30, 22, 5);
  const auto a = score_side(edges, ctx, remote);
  const auto b = score_side(edges, ctx, local);
  for (std::size_t i = 0; i < edges.size(); ++i) ASSERT_EQ(*a[i].value, *b[i].value);
  EXPECT_EQ(remote.model(), "native-common-neighbors");
}

// ---------------------------------------------------------------------------
// TCP

TEST(SocketTransport, TalksToALineServer) {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  ASSERT_GE(listener, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  socklen_t len = sizeof addr;
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  ASSERT_EQ(::listen(listener, 1), 0);
  const std::uint16_t port = ntohs(addr.sin_port);

  std::thread server([listener] {
    SidecarServer s(std::make_unique<NativeScorer>(), "tcp");
    const int fd = ::accept(listener, nullptr, nullptr);
    std::string buffer;
    char chunk[4096];
    while (!s.shutdown_requested()) {
      const ssize_t n = ::read(fd, chunk, sizeof chunk);
      if (n <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(n));
      for (auto nl = buffer.find('\n'); nl != std::string::npos; nl = buffer.find('\n')) {
        const std::string reply = s.handle(buffer.substr(0, nl)) + "\n";
        buffer.erase(0, nl + 1);
        if (::write(fd, reply.data(), reply.size()) < 0) break;
      }
    }
    ::close(fd);
  });

  {
    SidecarScorer remote(std::make_unique<SocketTransport>("127.0.0.1", port), fast_options());
    NativeScorer local;
    const auto ctx = sample_context(10);
    remote.set_context(ctx);
    local.set_context(ctx);
    EXPECT_EQ(remote.score_tails(ctx->nodes()[1], rel(1)), local.score_tails(ctx->nodes()[1], rel(1)));
    EXPECT_EQ(remote.model(), "tcp");
  }
  server.join();
  ::close(listener);
}

TEST(SocketTransport, RefusedConnectionIsUnavailable) {
  SidecarScorer scorer(std::make_unique<SocketTransport>("127.0.0.1", 1), fast_options());
  EXPECT_EQ(code_of([&] { scorer.model(); }), ErrorCode::kScorerUnavailable);
}
