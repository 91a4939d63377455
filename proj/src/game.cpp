#include "emgrl/game.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "emgrl/rng.hpp"

namespace emgrl {
namespace {

constexpr const char* kChartSchema = "emgrl.chart.v1";

}  // namespace

double NoteChart::note_seconds() const {
  int ticks = 0;
  for (const auto& n : notes) ticks += n.duration_ticks;
  return ticks / static_cast<double>(kTickHz);
}

NoteChart chart_from_notes(std::uint64_t seed, std::vector<Note> notes) {
  std::sort(notes.begin(), notes.end(), [](const Note& a, const Note& b) { return a.start_tick < b.start_tick; });
  NoteChart chart;
  chart.seed = seed;
  chart.ideal.assign(kEpisodeTicks, encode(MovementId::rest()));
  int last_end = 0;
  for (const auto& n : notes) {
    if (n.movement.is_rest()) throw std::invalid_argument("chart notes must be non-rest movements");
    if (n.start_tick < last_end) throw std::invalid_argument("chart notes overlap");
    if (n.end_tick() > kEpisodeTicks || n.duration_ticks <= 0) throw std::invalid_argument("chart note out of episode");
    const MovementVector v = encode(n.movement);
    std::fill(chart.ideal.begin() + n.start_tick, chart.ideal.begin() + n.end_tick(), v);
    last_end = n.end_tick();
  }
  chart.notes = std::move(notes);
  return chart;
}

NoteChart build_chart(std::uint64_t seed) {
  std::vector<std::pair<int, int>> pairs;  // (movement, duration ticks)
  for (int m = 1; m < kNumMovements; ++m) {
    for (int d : kNoteDurationTicks) pairs.emplace_back(m, d);
  }
  Rng rng = make_rng(seed, "chart");
  std::shuffle(pairs.begin(), pairs.end(), rng);

  const int note_ticks = std::accumulate(pairs.begin(), pairs.end(), 0,
                                         [](int acc, const auto& p) { return acc + p.second; });
  const int gaps = static_cast<int>(pairs.size()) + 1;
  const int rest_ticks = kEpisodeTicks - note_ticks;
  const int free_ticks = rest_ticks - gaps * kMinGapTicks;
  if (note_ticks != kNoteTicks || free_ticks < 0) throw std::logic_error("note chart layout infeasible");

  // Dirichlet(1, ..., 1) shares of the free rest time, rounded by largest
  // remainder so the gaps sum exactly.
  std::gamma_distribution<double> gamma(1.0, 1.0);
  std::vector<double> share(static_cast<std::size_t>(gaps));
  for (auto& s : share) s = gamma(rng);
  const double total = std::accumulate(share.begin(), share.end(), 0.0);
  std::vector<int> gap(static_cast<std::size_t>(gaps), kMinGapTicks);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < share.size(); ++i) {
    const double exact = free_ticks * share[i] / total;
    const int whole = static_cast<int>(exact);
    gap[i] += whole;
    assigned += whole;
    remainders.emplace_back(exact - whole, static_cast<int>(i));
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  for (int i = 0; i < free_ticks - assigned; ++i) ++gap[static_cast<std::size_t>(remainders[static_cast<std::size_t>(i)].second)];

  std::vector<Note> notes;
  int t = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    t += gap[i];
    notes.push_back(Note{MovementId(pairs[i].first), t, pairs[i].second});
    t += pairs[i].second;
  }
  t += gap.back();
  if (t != kEpisodeTicks) throw std::logic_error("note chart does not fill the episode");
  return chart_from_notes(seed, std::move(notes));
}

MovementVector ideal_action(const NoteChart& chart, int tick) {
  if (tick < 0 || tick >= chart.ticks()) throw std::out_of_range("tick outside the episode");
  return chart.ideal[static_cast<std::size_t>(tick)];
}

int reward(MovementVector action, MovementVector ideal) {
  if (action != ideal) return -1;
  return ideal == encode(MovementId::rest()) ? 0 : 1;
}

double normalized_return(long g0) {
  if (g0 < kMinReturn || g0 > kMaxReturn) throw std::out_of_range("episode return outside [-2740, 1200]");
  return static_cast<double>(g0 - kMinReturn) / static_cast<double>(kMaxReturn - kMinReturn);
}

GameSession::GameSession(const NoteChart& chart) : chart_(&chart) { log_.reserve(static_cast<std::size_t>(chart.ticks())); }

MovementVector GameSession::current_ideal() const {
  if (finished()) throw std::logic_error("episode already finished");
  return ideal_action(*chart_, tick_);
}

StepResult GameSession::step(const FeatureState& state, MovementVector action) {
  if (finished()) throw std::logic_error("step after the end of the episode");
  const MovementVector ideal = ideal_action(*chart_, tick_);
  const int r = reward(action, ideal);
  return_ += r;
  score_ += std::max(0, r);
  log_.push_back(TickRecord{tick_, state, action, ideal, r, score_});
  StepResult out{r, score_, tick_};
  ++tick_;
  return out;
}

void save_chart(const std::string& path, const NoteChart& chart) {
  nlohmann::json j;
  j["schema"] = kChartSchema;
  j["seed"] = chart.seed;
  j["notes"] = nlohmann::json::array();
  for (const auto& n : chart.notes) {
    j["notes"].push_back({{"movement", n.movement.index()}, {"start_s", n.start_s()}, {"duration_s", n.duration_s()}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write chart " + path);
  out << j.dump(2) << '\n';
}

NoteChart load_chart(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read chart " + path);
  const nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("schema") != kChartSchema) throw std::runtime_error("unsupported chart schema in " + path);
  std::vector<Note> notes;
  for (const auto& n : j.at("notes")) {
    notes.push_back(Note{MovementId(n.at("movement").get<int>()),
                         static_cast<int>(std::lround(n.at("start_s").get<double>() * kTickHz)),
                         static_cast<int>(std::lround(n.at("duration_s").get<double>() * kTickHz))});
  }
  return chart_from_notes(j.at("seed").get<std::uint64_t>(), std::move(notes));
}

}  // namespace emgrl
