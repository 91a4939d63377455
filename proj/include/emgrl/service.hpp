#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "emgrl/awac.hpp"
#include "emgrl/experiment.hpp"
#include "emgrl/game.hpp"
#include "emgrl/subject.hpp"

namespace emgrl {

enum class LivePhase { kIdle, kPlay, kTrain, kMotionTest };
std::string_view live_phase_name(LivePhase p);

// Server -> client, one per tick.
struct TickSnapshot {
  int t = 0;
  MovementVector ideal;
  MovementVector predicted;
  int reward = 0;
  long score = 0;
  LivePhase phase = LivePhase::kIdle;

  nlohmann::json to_json() const;
  static TickSnapshot from_json(const nlohmann::json& j);
};

// Session driven by a human through chords. Not thread-safe: commands are
// queued with submit() and applied at the next tick boundary.
class LiveSession {
 public:
  LiveSession(SubjectProfile profile, NoteChart chart, PolicyNet policy, AwacConfig awac, MotionTestSpec motion,
              std::uint64_t seed);

  // {type:"chord", keys:[...]} or {type:"control", cmd:"start|stop|finetune|motion_test"}.
  // Throws std::invalid_argument on malformed messages.
  void submit(const nlohmann::json& message);

  // Applies queued commands, then plays one tick when a phase needs it.
  std::optional<TickSnapshot> tick();

  LivePhase phase() const { return phase_; }
  const PolicyNet& policy() const { return policy_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const std::vector<TickRecord>& last_episode() const { return last_episode_; }
  std::optional<MotionTestResult> last_motion_test() const { return last_motion_; }
  long display_score() const { return session_ ? session_->display_score() : 0; }
  int episodes_played() const { return episodes_; }

 private:
  void apply(const nlohmann::json& message);
  void finish_episode();
  void run_finetune();
  TickSnapshot motion_tick();

  HumanAdapter adapter_;
  NoteChart chart_;
  PolicyNet policy_;
  AwacConfig awac_;
  MotionTestSpec motion_spec_;
  std::uint64_t seed_;
  Rng rng_;
  LivePhase phase_ = LivePhase::kIdle;
  LivePhase announced_ = LivePhase::kIdle;  // phase of the last snapshot
  std::vector<std::string> keys_;
  std::deque<nlohmann::json> queue_;
  std::optional<GameSession> session_;
  std::vector<TickRecord> last_episode_;
  ReplayBuffer buffer_;
  int episodes_ = 0;

  struct MotionState {
    std::vector<int> order;
    std::size_t trial = 0;
    int tick_in_trial = 0;
    int hits = 0;
    int run = 0;
    long score = 0;
    int t = 0;
    MotionTestResult result;
  };
  std::optional<MotionState> motion_;
  std::optional<MotionTestResult> last_motion_;
};

// Minimal RFC 6455 text-frame server. Plain HTTP GETs are answered from a
// static directory.
class WebSocketServer {
 public:
  using MessageHandler = std::function<void(const std::string&)>;
  using ConnectHandler = std::function<std::optional<std::string>()>;

  WebSocketServer() = default;
  ~WebSocketServer();
  WebSocketServer(const WebSocketServer&) = delete;
  WebSocketServer& operator=(const WebSocketServer&) = delete;

  // Binds 127.0.0.1:port (0 picks a free port) and starts accepting.
  void start(int port, std::string static_dir, MessageHandler on_message, ConnectHandler on_connect = {});
  void stop();
  int port() const { return port_; }
  void broadcast(const std::string& text);
  std::size_t clients() const;

 private:
  struct Client;
  void accept_loop();
  void serve(std::shared_ptr<Client> client);

  int listen_fd_ = -1;
  int port_ = 0;
  std::string static_dir_;
  MessageHandler on_message_;
  ConnectHandler on_connect_;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Client>> clients_;
  std::vector<std::thread> workers_;
};

// Sec-WebSocket-Accept for a client key.
std::string websocket_accept_key(const std::string& client_key);

// Blocking client used by tests and the CLI.
class WebSocketClient {
 public:
  WebSocketClient(const std::string& host, int port, const std::string& path = "/");
  ~WebSocketClient();
  WebSocketClient(const WebSocketClient&) = delete;
  WebSocketClient& operator=(const WebSocketClient&) = delete;

  void send(const std::string& text);
  // Next text message, or nullopt on close or timeout.
  std::optional<std::string> receive(std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));

 private:
  int fd_ = -1;
  std::string pending_;
};

struct LatencyStats {
  long samples = 0;
  double max_ms = 0.0;
  double mean_ms = 0.0;
};

// Session loop plus network endpoint. Snapshots are broadcast every tick
// period; commands from clients are applied at tick boundaries.
class SessionService {
 public:
  SessionService(LiveSession session, std::chrono::milliseconds tick_period = std::chrono::milliseconds(kTickMs));
  ~SessionService();

  void start(int port, const std::string& static_dir = {});
  void stop();
  int port() const { return server_.port(); }
  LatencyStats latency() const;
  // Runs f on the session between ticks.
  void with_session(const std::function<void(LiveSession&)>& f);

 private:
  void loop();

  LiveSession session_;
  std::chrono::milliseconds period_;
  WebSocketServer server_;
  std::thread thread_;
  std::atomic<bool> running_{false};
  mutable std::mutex mu_;  // inbox, snapshot and latency
  std::mutex session_mu_;
  std::deque<std::pair<nlohmann::json, std::chrono::steady_clock::time_point>> inbox_;
  std::optional<std::string> last_snapshot_;
  std::vector<std::chrono::steady_clock::time_point> waiting_;
  LatencyStats latency_;
};

}  // namespace emgrl
