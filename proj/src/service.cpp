#include "emgrl/service.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace emgrl {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr const char* kWebSocketGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

std::string base64(const unsigned char* data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool send_all(int fd, const void* data, std::size_t n) {
  const char* p = static_cast<const char*>(data);
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w <= 0) return false;
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

// Reads into buf until it holds at least n bytes. False on close, error or
// deadline.
bool fill(int fd, std::string& buf, std::size_t n, Clock::time_point deadline) {
  char chunk[4096];
  while (buf.size() < n) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) return false;
    pollfd pfd{fd, POLLIN, 0};
    const int r = ::poll(&pfd, 1, static_cast<int>(std::min<long>(left, 100)));
    if (r < 0) return false;
    if (r == 0) continue;
    const ssize_t got = ::recv(fd, chunk, sizeof chunk, 0);
    if (got <= 0) return false;
    buf.append(chunk, static_cast<std::size_t>(got));
  }
  return true;
}

std::string encode_frame(int opcode, const std::string& payload, bool masked) {
  std::string f;
  f.push_back(static_cast<char>(0x80 | opcode));
  const std::uint8_t mask_bit = masked ? 0x80 : 0x00;
  const std::size_t n = payload.size();
  if (n < 126) {
    f.push_back(static_cast<char>(mask_bit | n));
  } else if (n <= 0xFFFF) {
    f.push_back(static_cast<char>(mask_bit | 126));
    f.push_back(static_cast<char>((n >> 8) & 0xFF));
    f.push_back(static_cast<char>(n & 0xFF));
  } else {
    f.push_back(static_cast<char>(mask_bit | 127));
    for (int i = 7; i >= 0; --i) f.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xFF));
  }
  if (!masked) return f + payload;
  static thread_local std::mt19937 gen(std::random_device{}());
  std::array<char, 4> key{};
  for (auto& k : key) k = static_cast<char>(gen() & 0xFF);
  f.append(key.data(), 4);
  for (std::size_t i = 0; i < n; ++i) f.push_back(static_cast<char>(payload[i] ^ key[i % 4]));
  return f;
}

struct Frame {
  bool fin = true;
  int opcode = 0;
  std::string payload;
};

// Parses one frame from the front of buf, reading more as needed.
std::optional<Frame> read_frame(int fd, std::string& buf, Clock::time_point deadline) {
  if (!fill(fd, buf, 2, deadline)) return std::nullopt;
  const auto b0 = static_cast<std::uint8_t>(buf[0]);
  const auto b1 = static_cast<std::uint8_t>(buf[1]);
  std::size_t header = 2;
  std::uint64_t len = b1 & 0x7F;
  if (len == 126) {
    if (!fill(fd, buf, 4, deadline)) return std::nullopt;
    len = (static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[2])) << 8) | static_cast<std::uint8_t>(buf[3]);
    header = 4;
  } else if (len == 127) {
    if (!fill(fd, buf, 10, deadline)) return std::nullopt;
    len = 0;
    for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<std::uint8_t>(buf[2 + static_cast<std::size_t>(i)]);
    header = 10;
  }
  if (len > (64U << 20)) return std::nullopt;
  const bool masked = (b1 & 0x80) != 0;
  const std::size_t total = header + (masked ? 4 : 0) + static_cast<std::size_t>(len);
  if (!fill(fd, buf, total, deadline)) return std::nullopt;
  Frame f;
  f.fin = (b0 & 0x80) != 0;
  f.opcode = b0 & 0x0F;
  f.payload = buf.substr(total - static_cast<std::size_t>(len), static_cast<std::size_t>(len));
  if (masked) {
    const std::string key = buf.substr(header, 4);
    for (std::size_t i = 0; i < f.payload.size(); ++i) f.payload[i] = static_cast<char>(f.payload[i] ^ key[i % 4]);
  }
  buf.erase(0, total);
  return f;
}

std::string content_type(const std::string& path) {
  static const std::map<std::string, std::string> types{{".html", "text/html"},
                                                        {".js", "text/javascript"},
                                                        {".css", "text/css"},
                                                        {".json", "application/json"},
                                                        {".svg", "image/svg+xml"},
                                                        {".png", "image/png"}};
  const auto it = types.find(std::filesystem::path(path).extension().string());
  return it == types.end() ? "application/octet-stream" : it->second;
}

}  // namespace

std::string websocket_accept_key(const std::string& client_key) {
  const std::string s = client_key + kWebSocketGuid;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(s.data()), s.size(), digest);
  return base64(digest, sizeof digest);
}

// ---------------------------------------------------------------- snapshots

std::string_view live_phase_name(LivePhase p) {
  switch (p) {
    case LivePhase::kIdle: return "idle";
    case LivePhase::kPlay: return "play";
    case LivePhase::kTrain: return "train";
    case LivePhase::kMotionTest: return "motion_test";
  }
  return "?";
}

json TickSnapshot::to_json() const {
  return {{"t", t},
          {"ideal", ideal.bits()},
          {"predicted", predicted.bits()},
          {"reward", reward},
          {"score", score},
          {"phase", live_phase_name(phase)}};
}

TickSnapshot TickSnapshot::from_json(const json& j) {
  TickSnapshot s;
  s.t = j.at("t").get<int>();
  s.ideal = MovementVector::from_bits(j.at("ideal").get<std::array<int, kActionBits>>());
  s.predicted = MovementVector::from_bits(j.at("predicted").get<std::array<int, kActionBits>>());
  s.reward = j.at("reward").get<int>();
  s.score = j.at("score").get<long>();
  const auto phase = j.at("phase").get<std::string>();
  for (LivePhase p : {LivePhase::kIdle, LivePhase::kPlay, LivePhase::kTrain, LivePhase::kMotionTest}) {
    if (live_phase_name(p) == phase) s.phase = p;
  }
  return s;
}

// ---------------------------------------------------------------- live session

LiveSession::LiveSession(SubjectProfile profile, NoteChart chart, PolicyNet policy, AwacConfig awac,
                         MotionTestSpec motion, std::uint64_t seed)
    : adapter_(std::move(profile), derive_seed(seed, "live-subject", 0)),
      chart_(std::move(chart)),
      policy_(std::move(policy)),
      awac_(std::move(awac)),
      motion_spec_(motion),
      seed_(seed),
      rng_(make_rng(seed, "live", 0)) {}

void LiveSession::submit(const json& message) {
  if (!message.is_object() || !message.contains("type")) throw std::invalid_argument("message needs a type");
  const auto type = message.at("type").get<std::string>();
  if (type == "chord") {
    if (!message.contains("keys") || !message.at("keys").is_array()) throw std::invalid_argument("chord needs keys");
    for (const auto& k : message.at("keys")) {
      if (!k.is_string()) throw std::invalid_argument("chord keys must be strings");
    }
  } else if (type == "control") {
    static const std::vector<std::string> cmds{"start", "stop", "finetune", "motion_test"};
    const auto cmd = message.value("cmd", std::string{});
    if (std::find(cmds.begin(), cmds.end(), cmd) == cmds.end()) throw std::invalid_argument("unknown control command");
  } else {
    throw std::invalid_argument("unknown message type " + type);
  }
  queue_.push_back(message);
}

void LiveSession::apply(const json& message) {
  if (message.at("type") == "chord") {
    keys_ = message.at("keys").get<std::vector<std::string>>();
    return;
  }
  const auto cmd = message.at("cmd").get<std::string>();
  if (cmd == "start" && phase_ == LivePhase::kIdle) {
    session_.emplace(chart_);
    phase_ = LivePhase::kPlay;
  } else if (cmd == "stop") {
    // Aborted episodes and Motion Tests are discarded.
    session_.reset();
    motion_.reset();
    phase_ = LivePhase::kIdle;
  } else if (cmd == "finetune" && phase_ == LivePhase::kIdle && !buffer_.empty()) {
    phase_ = LivePhase::kTrain;
  } else if (cmd == "motion_test" && phase_ == LivePhase::kIdle) {
    MotionState m;
    for (int id = 1; id < kNumMovements; ++id) {
      for (int k = 0; k < motion_spec_.trials_per_movement; ++k) m.order.push_back(id);
    }
    std::shuffle(m.order.begin(), m.order.end(), rng_);
    m.result.policy_index = -1;
    motion_ = std::move(m);
    phase_ = LivePhase::kMotionTest;
  }
}

void LiveSession::finish_episode() {
  last_episode_ = session_->log();
  buffer_.append(episode_from_log(last_episode_, episodes_), awac_.epsilon, rng_);
  ++episodes_;
  phase_ = LivePhase::kIdle;
}

void LiveSession::run_finetune() {
  const FinetuneResult r = finetune_repetition(buffer_, chart_, policy_, awac_,
                                               derive_seed(seed_, "live-finetune", static_cast<std::uint64_t>(episodes_)));
  policy_ = r.policy;
  phase_ = LivePhase::kIdle;
}

TickSnapshot LiveSession::motion_tick() {
  MotionState& m = *motion_;
  const int movement = m.order[m.trial];
  const MovementVector target = encode(MovementId(movement));
  const auto out = adapter_.on_chord(keys_, m.t);
  const MovementVector pred = policy_.predict(out.features);
  const bool hit = pred == target;
  const int r = reward(pred, target);
  m.score += std::max(0, r);
  ++m.tick_in_trial;
  m.hits += hit ? 1 : 0;
  m.run = hit ? m.run + 1 : 0;
  m.result.total_ticks += 1;
  if (hit) m.result.emr += 1.0;  // hit count until the test ends
  TickSnapshot snap{m.t++, target, pred, r, m.score, LivePhase::kMotionTest};
  const bool success = (motion_spec_.consecutive ? m.run : m.hits) >= motion_spec_.success_hits;
  if (success || m.tick_in_trial >= motion_spec_.timeout_ticks) {
    m.result.trials.push_back({movement, static_cast<int>(m.trial), success, m.tick_in_trial, m.hits});
    m.result.successes += success ? 1 : 0;
    m.tick_in_trial = m.hits = m.run = 0;
    if (++m.trial == m.order.size()) {
      m.result.emr /= static_cast<double>(m.result.total_ticks);
      last_motion_ = m.result;
      motion_.reset();
      phase_ = LivePhase::kIdle;
    }
  }
  return snap;
}

std::optional<TickSnapshot> LiveSession::tick() {
  while (!queue_.empty()) {
    apply(queue_.front());
    queue_.pop_front();
  }
  std::optional<TickSnapshot> snap;
  switch (phase_) {
    case LivePhase::kPlay: {
      const int t = session_->tick();
      const MovementVector ideal = session_->current_ideal();
      const auto out = adapter_.on_chord(keys_, t);
      const MovementVector action = policy_.predict(out.features);
      const StepResult r = session_->step(out.features, action);
      snap = TickSnapshot{t, ideal, action, r.reward, r.display_score, LivePhase::kPlay};
      if (session_->finished()) finish_episode();
      break;
    }
    case LivePhase::kMotionTest: snap = motion_tick(); break;
    case LivePhase::kTrain:
      // The train phase is announced for one tick before the blocking run.
      if (announced_ == LivePhase::kTrain) run_finetune();
      snap = TickSnapshot{0, {}, {}, 0, display_score(), phase_};
      break;
    case LivePhase::kIdle:
      if (announced_ != LivePhase::kIdle) snap = TickSnapshot{0, {}, {}, 0, display_score(), phase_};
      break;
  }
  if (snap) announced_ = snap->phase;
  return snap;
}

// ---------------------------------------------------------------- server

struct WebSocketServer::Client {
  int fd = -1;
  std::mutex write_mu;
  std::atomic<bool> open{true};
  bool websocket = false;

  bool send_text(const std::string& text) {
    std::lock_guard lock(write_mu);
    if (!open) return false;
    const std::string f = encode_frame(0x1, text, false);
    if (!send_all(fd, f.data(), f.size())) open = false;
    return open;
  }
};

WebSocketServer::~WebSocketServer() { stop(); }

void WebSocketServer::start(int port, std::string static_dir, MessageHandler on_message, ConnectHandler on_connect) {
  if (running_) throw std::logic_error("server already running");
  static_dir_ = std::move(static_dir);
  on_message_ = std::move(on_message);
  on_connect_ = std::move(on_connect);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("socket() failed");
  const int yes = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("cannot listen on port " + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void WebSocketServer::stop() {
  if (!running_.exchange(false)) return;
  if (accept_thread_.joinable()) accept_thread_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  {
    std::lock_guard lock(mu_);
    for (auto& c : clients_) ::shutdown(c->fd, SHUT_RDWR);
  }
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
  workers_.clear();
  clients_.clear();
}

std::size_t WebSocketServer::clients() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(clients_.begin(), clients_.end(),
                                                [](const auto& c) { return c->websocket && c->open; }));
}

void WebSocketServer::broadcast(const std::string& text) {
  std::vector<std::shared_ptr<Client>> targets;
  {
    std::lock_guard lock(mu_);
    for (const auto& c : clients_) {
      if (c->websocket && c->open) targets.push_back(c);
    }
  }
  for (const auto& c : targets) c->send_text(text);
}

void WebSocketServer::accept_loop() {
  while (running_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    if (::poll(&pfd, 1, 100) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    auto client = std::make_shared<Client>();
    client->fd = fd;
    std::lock_guard lock(mu_);
    clients_.push_back(client);
    workers_.emplace_back([this, client] { serve(client); });
  }
}

void WebSocketServer::serve(std::shared_ptr<Client> client) {
  const int fd = client->fd;
  std::string buf;
  const auto header_deadline = Clock::now() + std::chrono::seconds(5);
  std::size_t end = std::string::npos;
  while ((end = buf.find("\r\n\r\n")) == std::string::npos) {
    if (buf.size() > 65536 || !fill(fd, buf, buf.size() + 1, header_deadline)) break;
  }
  std::istringstream req(end == std::string::npos ? std::string{} : buf.substr(0, end));
  buf.erase(0, end == std::string::npos ? buf.size() : end + 4);
  std::string method, target, version, line;
  req >> method >> target >> version;
  std::getline(req, line);
  std::map<std::string, std::string> headers;
  while (std::getline(req, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string value = line.substr(colon + 1);
    value.erase(0, value.find_first_not_of(' '));
    while (!value.empty() && (value.back() == '\r' || value.back() == ' ')) value.pop_back();
    headers[lower(line.substr(0, colon))] = value;
  }

  const bool upgrade = lower(headers["upgrade"]) == "websocket" && headers.count("sec-websocket-key");
  if (method == "GET" && upgrade) {
    const std::string resp = "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                             "Sec-WebSocket-Accept: " + websocket_accept_key(headers["sec-websocket-key"]) + "\r\n\r\n";
    {
      std::lock_guard lock(client->write_mu);
      send_all(fd, resp.data(), resp.size());
    }
    if (on_connect_) {
      if (auto hello = on_connect_()) client->send_text(*hello);
    }
    client->websocket = true;
    std::string message;
    while (running_ && client->open) {
      auto frame = read_frame(fd, buf, Clock::now() + std::chrono::hours(24 * 365));
      if (!frame) break;
      if (frame->opcode == 0x8) {
        std::lock_guard lock(client->write_mu);
        const auto close = encode_frame(0x8, {}, false);
        send_all(fd, close.data(), close.size());
        break;
      }
      if (frame->opcode == 0x9) {
        std::lock_guard lock(client->write_mu);
        const auto pong = encode_frame(0xA, frame->payload, false);
        send_all(fd, pong.data(), pong.size());
        continue;
      }
      if (frame->opcode == 0x1 || frame->opcode == 0x0) {
        message += frame->payload;
        if (frame->fin) {
          if (on_message_) on_message_(message);
          message.clear();
        }
      }
    }
  } else {
    std::string status = "404 Not Found";
    std::string body = "not found\n";
    std::string type = "text/plain";
    std::string path = target.substr(0, target.find('?'));
    if (path == "/") path = "/index.html";
    if (method == "GET" && !static_dir_.empty() && path.find("..") == std::string::npos) {
      std::ifstream in(std::filesystem::path(static_dir_) / path.substr(1), std::ios::binary);
      if (in) {
        body.assign(std::istreambuf_iterator<char>(in), {});
        status = "200 OK";
        type = content_type(path);
      }
    }
    const std::string resp = "HTTP/1.1 " + status + "\r\nContent-Type: " + type +
                             "\r\nContent-Length: " + std::to_string(body.size()) + "\r\nConnection: close\r\n\r\n" + body;
    std::lock_guard lock(client->write_mu);
    send_all(fd, resp.data(), resp.size());
  }
  {
    std::lock_guard lock(client->write_mu);
    client->open = false;
  }
  ::shutdown(fd, SHUT_RDWR);
  ::close(fd);
  std::lock_guard lock(mu_);
  clients_.erase(std::remove(clients_.begin(), clients_.end(), client), clients_.end());
}

// ---------------------------------------------------------------- client

WebSocketClient::WebSocketClient(const std::string& host, int port, const std::string& path) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) {
    throw std::runtime_error("cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int rc = fd_ < 0 ? -1 : ::connect(fd_, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) {
    if (fd_ >= 0) ::close(fd_);
    throw std::runtime_error("cannot connect to " + host + ":" + std::to_string(port));
  }
  std::mt19937 gen(std::random_device{}());
  unsigned char nonce[16];
  for (auto& b : nonce) b = static_cast<unsigned char>(gen() & 0xFF);
  const std::string key = base64(nonce, sizeof nonce);
  const std::string req = "GET " + path + " HTTP/1.1\r\nHost: " + host + "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                          "Sec-WebSocket-Key: " + key + "\r\nSec-WebSocket-Version: 13\r\n\r\n";
  send_all(fd_, req.data(), req.size());
  const auto deadline = Clock::now() + std::chrono::seconds(5);
  std::size_t end = std::string::npos;
  while ((end = pending_.find("\r\n\r\n")) == std::string::npos) {
    if (!fill(fd_, pending_, pending_.size() + 1, deadline)) throw std::runtime_error("handshake failed");
  }
  const std::string head = pending_.substr(0, end);
  pending_.erase(0, end + 4);
  if (head.rfind("HTTP/1.1 101", 0) != 0 || head.find(websocket_accept_key(key)) == std::string::npos) {
    throw std::runtime_error("server rejected the WebSocket upgrade");
  }
}

WebSocketClient::~WebSocketClient() {
  if (fd_ >= 0) {
    const auto close = encode_frame(0x8, {}, true);
    send_all(fd_, close.data(), close.size());
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
  }
}

void WebSocketClient::send(const std::string& text) {
  const auto f = encode_frame(0x1, text, true);
  if (!send_all(fd_, f.data(), f.size())) throw std::runtime_error("send failed");
}

std::optional<std::string> WebSocketClient::receive(std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  std::string message;
  while (true) {
    auto f = read_frame(fd_, pending_, deadline);
    if (!f || f->opcode == 0x8) return std::nullopt;
    if (f->opcode == 0x9 || f->opcode == 0xA) continue;
    message += f->payload;
    if (f->fin) return message;
  }
}

// ---------------------------------------------------------------- service

SessionService::SessionService(LiveSession session, std::chrono::milliseconds tick_period)
    : session_(std::move(session)), period_(tick_period) {
  if (period_.count() <= 0) throw std::invalid_argument("tick period must be positive");
}

SessionService::~SessionService() { stop(); }

void SessionService::start(int port, const std::string& static_dir) {
  server_.start(
      port, static_dir,
      [this](const std::string& text) {
        try {
          json msg = json::parse(text);
          std::lock_guard lock(mu_);
          inbox_.emplace_back(std::move(msg), Clock::now());
        } catch (const json::exception&) {
          // Malformed input is dropped; the session never sees it.
        }
      },
      [this]() {
        std::lock_guard lock(mu_);
        return last_snapshot_;
      });
  running_ = true;
  thread_ = std::thread([this] { loop(); });
}

void SessionService::stop() {
  if (running_.exchange(false) && thread_.joinable()) thread_.join();
  server_.stop();
}

LatencyStats SessionService::latency() const {
  std::lock_guard lock(mu_);
  return latency_;
}

void SessionService::with_session(const std::function<void(LiveSession&)>& f) {
  std::lock_guard lock(session_mu_);
  f(session_);
}

void SessionService::loop() {
  auto next = Clock::now();
  while (running_) {
    next += period_;
    std::this_thread::sleep_until(next);
    std::deque<std::pair<json, Clock::time_point>> inbox;
    {
      std::lock_guard lock(mu_);
      inbox.swap(inbox_);
    }
    std::optional<TickSnapshot> snap;
    {
      std::lock_guard lock(session_mu_);
      for (auto& [msg, at] : inbox) {
        try {
          session_.submit(msg);
          if (msg.value("type", "") == "chord") waiting_.push_back(at);
        } catch (const std::invalid_argument& e) {
          std::clog << "session: dropped message: " << e.what() << '\n';
        }
      }
      snap = session_.tick();
    }
    if (!snap) continue;
    const std::string text = snap->to_json().dump() + "\n";
    server_.broadcast(text);
    const auto sent = Clock::now();
    std::lock_guard lock(mu_);
    last_snapshot_ = text;
    for (const auto& at : waiting_) {
      const double ms = std::chrono::duration<double, std::milli>(sent - at).count();
      latency_.mean_ms = (latency_.mean_ms * static_cast<double>(latency_.samples) + ms) / static_cast<double>(latency_.samples + 1);
      latency_.max_ms = std::max(latency_.max_ms, ms);
      ++latency_.samples;
    }
    waiting_.clear();
    if (sent > next + period_) {
      std::clog << "session: tick overran by "
                << std::chrono::duration<double, std::milli>(sent - next).count() << " ms\n";
      next = sent;
    }
  }
}

}  // namespace emgrl
