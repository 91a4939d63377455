#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "emgrl/service.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

using namespace emgrl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

LiveSession make_session(std::uint64_t seed = 1) {
  SubjectSpec s;
  s.seed = 8;
  s.noise_scale = 0.2;
  AwacConfig awac;
  awac.gradient_steps = 10;
  awac.eval_interval = 5;
  awac.batch_size = 32;
  MotionTestSpec motion;
  motion.trials_per_movement = 1;
  motion.timeout_ticks = 20;
  motion.success_hits = 5;
  return LiveSession(make_profile(s), build_chart(3), PolicyNet(PolicyArchitecture{}, 2), awac, motion, seed);
}

json chord(std::vector<std::string> keys) { return {{"type", "chord"}, {"keys", keys}}; }
json control(const std::string& cmd) { return {{"type", "control"}, {"cmd", cmd}}; }

}  // namespace

TEST_CASE("snapshots round-trip through JSON") {
  TickSnapshot s{12, encode(MovementId(3)), encode(MovementId(0)), -1, 40, LivePhase::kPlay};
  const auto back = TickSnapshot::from_json(json::parse(s.to_json().dump()));
  CHECK(back.t == 12);
  CHECK(back.ideal == s.ideal);
  CHECK(back.predicted == s.predicted);
  CHECK(back.reward == -1);
  CHECK(back.score == 40);
  CHECK(back.phase == LivePhase::kPlay);
  CHECK(s.to_json()["ideal"] == json::array({0, 0, 1, 0, 0, 0, 0}));
}

TEST_CASE("live session validates messages") {
  LiveSession s = make_session();
  CHECK_THROWS_AS(s.submit(json::array()), std::invalid_argument);
  CHECK_THROWS_AS(s.submit({{"type", "chord"}}), std::invalid_argument);
  CHECK_THROWS_AS(s.submit({{"type", "chord"}, {"keys", {1, 2}}}), std::invalid_argument);
  CHECK_THROWS_AS(s.submit(control("dance")), std::invalid_argument);
  CHECK_THROWS_AS(s.submit({{"type", "telepathy"}}), std::invalid_argument);
  s.submit(chord({"q"}));
  CHECK_FALSE(s.tick().has_value());  // idle stays quiet
  s.submit(control("finetune"));      // nothing recorded yet: ignored
  CHECK_FALSE(s.tick().has_value());
  CHECK(s.phase() == LivePhase::kIdle);
}

TEST_CASE("a scripted episode keeps the rendered score equal to the engine score") {
  LiveSession s = make_session();
  const NoteChart chart = build_chart(3);
  s.submit(control("start"));
  long positives = 0;
  long prev = 0;
  int ticks = 0;
  while (true) {
    // Press the keys of the upcoming note so the chord path gets exercised.
    const auto ideal = chart.ideal[static_cast<std::size_t>(std::min(ticks, chart.ticks() - 1))];
    std::vector<std::string> keys;
    const char* names[] = {"q", "a", "w", "s", "e", "d"};
    for (int b = 0; b < 6; ++b) {
      if (ideal[b]) keys.emplace_back(names[b]);
    }
    s.submit(chord(keys));
    const auto snap = s.tick();
    REQUIRE(snap.has_value());
    if (snap->phase != LivePhase::kPlay) break;
    CHECK(snap->t == ticks);
    CHECK(snap->ideal == ideal);
    CHECK(snap->reward == reward(snap->predicted, snap->ideal));
    positives += std::max(0, snap->reward);
    CHECK(snap->score == positives);
    CHECK(snap->score >= prev);
    prev = snap->score;
    ++ticks;
  }
  CHECK(ticks == 2740);
  CHECK(s.phase() == LivePhase::kIdle);
  CHECK(s.display_score() == positives);
  CHECK(s.last_episode().size() == 2740);
  CHECK(s.episodes_played() == 1);
  CHECK(s.buffer().size() == 2740);

  // Train: announced for one tick, then run.
  const auto before = policy_hash(s.policy());
  s.submit(control("finetune"));
  auto t1 = s.tick();
  REQUIRE(t1.has_value());
  CHECK(t1->phase == LivePhase::kTrain);
  auto t2 = s.tick();
  REQUIRE(t2.has_value());
  CHECK(t2->phase == LivePhase::kIdle);
  CHECK(s.phase() == LivePhase::kIdle);
  (void)before;

  s.submit(control("motion_test"));
  int motion_ticks = 0;
  while (true) {
    const auto snap = s.tick();
    REQUIRE(snap.has_value());
    if (snap->phase != LivePhase::kMotionTest) break;
    ++motion_ticks;
  }
  REQUIRE(s.last_motion_test().has_value());
  CHECK(s.last_motion_test()->trials.size() == 12);
  CHECK(motion_ticks == s.last_motion_test()->total_ticks);
}

TEST_CASE("stop discards a running episode") {
  LiveSession s = make_session();
  s.submit(control("start"));
  for (int i = 0; i < 30; ++i) s.tick();
  s.submit(control("stop"));
  const auto snap = s.tick();
  REQUIRE(snap.has_value());
  CHECK(snap->phase == LivePhase::kIdle);
  CHECK(s.buffer().empty());
  CHECK(s.episodes_played() == 0);
}

TEST_CASE("websocket accept key follows the handshake rule") {
  CHECK(websocket_accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST_CASE("service streams snapshots and applies chords within a tick") {
  const auto assets = fs::temp_directory_path() / ("emgrl_static_" + std::to_string(::getpid()));
  fs::create_directories(assets);
  std::ofstream(assets / "index.html") << "<html>ok</html>";

  const auto period = std::chrono::milliseconds(kTickMs);
  SessionService service(make_session(), period);
  service.start(0, assets.string());
  REQUIRE(service.port() > 0);

  httplib::Client http("127.0.0.1", service.port());
  auto page = http.Get("/");
  REQUIRE(page);
  CHECK(page->status == 200);
  CHECK(page->body == "<html>ok</html>");
  auto missing = http.Get("/nope.js");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  auto escape = http.Get("/../etc/passwd");
  REQUIRE(escape);
  CHECK(escape->status != 200);

  WebSocketClient client("127.0.0.1", service.port());
  client.send("not json");
  client.send(control("start").dump());
  std::vector<TickSnapshot> snaps;
  for (int i = 0; i < 40; ++i) {
    const auto text = client.receive(std::chrono::milliseconds(1000));
    REQUIRE(text.has_value());
    snaps.push_back(TickSnapshot::from_json(json::parse(*text)));
    client.send(chord({i % 2 ? "q" : "w"}).dump());
  }
  CHECK(snaps.front().phase == LivePhase::kPlay);
  for (std::size_t i = 1; i < snaps.size(); ++i) CHECK(snaps[i].t == snaps[i - 1].t + 1);

  // A second client gets the latest snapshot straight away.
  WebSocketClient late("127.0.0.1", service.port());
  const auto first = late.receive(std::chrono::milliseconds(500));
  REQUIRE(first.has_value());
  CHECK(json::parse(*first).contains("score"));

  service.stop();
  const auto lat = service.latency();
  CHECK(lat.samples >= 30);
  MESSAGE("chord latency mean " << lat.mean_ms << " ms, max " << lat.max_ms << " ms");
  // The client answers each snapshot at once, so every chord lands just after
  // a boundary and waits a full period. On top of that comes the tick's own
  // compute and scheduler wake-up, which can reach a few ms on a busy core.
  CHECK(lat.max_ms <= 1.2 * static_cast<double>(period.count()));
  CHECK(lat.mean_ms <= static_cast<double>(period.count()));
  fs::remove_all(assets);
}
