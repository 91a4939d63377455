// Command-line front end: runs the protocol phase by phase in a work
// directory, or end to end from a config file.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

#include "emgrl/experiment.hpp"
#include "emgrl/io.hpp"
#include "emgrl/service.hpp"
#include "emgrl/sigproc.hpp"

namespace fs = std::filesystem;
using namespace emgrl;

namespace {

volatile std::sig_atomic_t g_stop = 0;

Experiment open_or_create(const std::string& workdir, const std::string& config_path) {
  if (fs::exists(fs::path(workdir) / "state.json")) return Experiment::open(workdir);
  if (config_path.empty()) throw std::runtime_error(workdir + " has no experiment; pass --config");
  return Experiment(load_experiment_config(config_path), workdir);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      seeds.push_back(std::stoull(item));
    } else {
      const auto lo = std::stoull(item.substr(0, dash));
      const auto hi = std::stoull(item.substr(dash + 1));
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    }
  }
  if (seeds.empty()) throw std::invalid_argument("no seeds given");
  return seeds;
}

void print_report_summary(const ExperimentReport& r) {
  std::cout << "rep policy  return  norm    emr     f1      changes mi\n";
  for (const auto& m : r.repetitions) {
    std::printf("%-3d pi_%-4d %-7ld %.4f  %.4f  %.4f  %-7d %.3f\n", m.repetition, m.policy_index, m.episode_return,
                m.normalized_return, m.emr, m.f1_macro, m.action_changes, m.mi);
  }
  for (const auto& m : r.motion_tests) {
    std::printf("motion test pi_%d: emr %.4f, %d/%zu trials succeeded\n", m.policy_index, m.emr, m.successes,
                m.trials.size());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EMG motor-intent decoding workbench"};
  app.require_subcommand(1);

  std::string workdir = "work";
  std::string config_path;
  int rep = 0;
  std::string policy_flag;
  std::string out_dir;
  std::string seeds_text = "1-10";
  int port = 8080;
  std::string static_dir;
  int tick_ms = kTickMs;
  std::string in_path;
  std::string noise_text = "0.1,0.2,0.3,0.4,0.6";
  int movement = 1;
  long duration_ms = 3000;
  std::uint64_t seed = 1;

  auto* movements = app.add_subcommand("movements", "Print the movement table as JSON");

  auto* pretrain = app.add_subcommand("pretrain", "Record the static session and train pi_0");
  pretrain->add_option("--workdir", workdir)->capture_default_str();
  pretrain->add_option("--config", config_path, "Experiment config (needed for a new work directory)");

  auto* play = app.add_subcommand("play", "Play repetition k with its policy");
  play->add_option("--rep", rep)->required();
  play->add_option("--workdir", workdir)->capture_default_str();

  auto* finetune = app.add_subcommand("finetune", "Fine-tune after repetition k, producing pi_{k+1}");
  finetune->add_option("--rep", rep)->required();
  finetune->add_option("--workdir", workdir)->capture_default_str();

  auto* motion = app.add_subcommand("motion-test", "Run a Motion Test");
  motion->add_option("--policy", policy_flag)->required()->check(CLI::IsMember({"p0", "p8"}));
  motion->add_option("--workdir", workdir)->capture_default_str();

  auto* experiment = app.add_subcommand("experiment", "Whole-protocol runs");
  experiment->require_subcommand(1);
  auto* run = experiment->add_subcommand("run", "Run the full protocol from a config");
  run->add_option("--config", config_path)->required();
  run->add_option("--workdir", workdir, "Persist phases here (resumes if present)");
  run->add_option("--out", out_dir, "Write the report bundle here");
  auto* batch = experiment->add_subcommand("batch", "Run one experiment per seed and test across seeds");
  batch->add_option("--config", config_path)->required();
  batch->add_option("--seeds", seeds_text, "e.g. 1-10 or 3,5,8")->capture_default_str();
  batch->add_option("--out", out_dir, "Write batch.json here");

  auto* report = app.add_subcommand("report", "Write the report bundle of a finished work directory");
  report->add_option("--workdir", workdir)->capture_default_str();
  report->add_option("--out", out_dir)->required();

  auto* serve = app.add_subcommand("serve", "Live session over WebSocket");
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--workdir", workdir, "Use the newest policy of this work directory")->capture_default_str();
  serve->add_option("--static", static_dir, "Directory of UI assets");
  serve->add_option("--tick-ms", tick_ms)->capture_default_str()->check(CLI::PositiveNumber);

  auto* extract = app.add_subcommand("extract-features", "Raw session JSONL -> feature session JSONL");
  extract->add_option("--in", in_path)->required();
  extract->add_option("--out", out_dir)->required();

  auto* record = app.add_subcommand("record-raw", "Synthesize a raw 8-channel recording of one movement");
  record->add_option("--config", config_path)->required();
  record->add_option("--movement", movement)->check(CLI::Range(0, kNumMovements - 1));
  record->add_option("--ms", duration_ms)->capture_default_str();
  record->add_option("--seed", seed)->capture_default_str();
  record->add_option("--out", out_dir)->required();

  auto* calibrate = app.add_subcommand("calibrate", "Measure gameplay MI for several noise levels");
  calibrate->add_option("--config", config_path)->required();
  calibrate->add_option("--noise", noise_text)->capture_default_str();
  calibrate->add_option("--seeds", seeds_text)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*movements) {
      std::cout << io::movement_table().dump(2) << '\n';
    } else if (*pretrain) {
      Experiment e = open_or_create(workdir, config_path);
      e.pretrain();
      std::cout << "pi_0 validation F1 " << e.pretraining()->best_val_f1 << " (epoch " << e.pretraining()->best_epoch
                << "), hash " << policy_hash(e.policy(0)) << '\n';
    } else if (*play) {
      Experiment e = Experiment::open(workdir);
      if (e.state().phase() == Phase::kFamiliarize) e.familiarize();
      const auto& ep = e.play(rep);
      long g = 0;
      for (const auto& t : ep.log) g += t.reward;
      std::cout << "repetition " << rep << " with pi_" << ep.policy_index << ": return " << g << ", normalized "
                << normalized_return(g) << '\n';
    } else if (*finetune) {
      Experiment e = Experiment::open(workdir);
      const auto& s = e.finetune(rep);
      std::cout << "pi_" << rep + 1 << ": best step " << s.best_step << ", simulated return " << s.start_return
                << " -> " << s.best_return << '\n';
    } else if (*motion) {
      Experiment e = Experiment::open(workdir);
      const int idx = policy_flag == "p0" ? 0 : e.config().n_repetitions;
      const auto& m = e.motion_test(idx);
      std::cout << "pi_" << idx << ": emr " << m.emr << ", " << m.successes << '/' << m.trials.size()
                << " trials succeeded\n";
    } else if (*run) {
      const ExperimentConfig config = load_experiment_config(config_path);
      if (!workdir.empty() && run->count("--workdir")) {
        Experiment e = fs::exists(fs::path(workdir) / "state.json") ? Experiment::open(workdir) : Experiment(config, workdir);
        e.run_to_end();
        print_report_summary(e.report());
        if (!out_dir.empty()) e.write_bundle(out_dir);
      } else {
        Experiment e(config);
        e.run_to_end();
        print_report_summary(e.report());
        if (!out_dir.empty()) e.write_bundle(out_dir);
      }
    } else if (*batch) {
      const BatchReport b = run_batch(load_experiment_config(config_path), parse_seeds(seeds_text));
      const auto j = to_json(b);
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        io::write_json((fs::path(out_dir) / "batch.json").string(), j);
      }
      std::cout << j.dump(2) << '\n';
    } else if (*report) {
      Experiment e = Experiment::open(workdir);
      e.write_bundle(out_dir);
      print_report_summary(e.report());
    } else if (*serve) {
      Experiment e = Experiment::open(workdir);
      const auto& n = e.finetune_summaries();
      const PolicyNet& policy = e.policy(static_cast<int>(n.size()));
      LiveSession session(e.profile_at(0), e.chart(), policy, e.config().awac, e.config().motion_test, e.config().seed);
      SessionService service(std::move(session), std::chrono::milliseconds(tick_ms));
      service.start(port, static_dir);
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      std::cout << "serving on ws://127.0.0.1:" << service.port() << "/ with pi_" << n.size() << '\n';
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      service.stop();
      const auto lat = service.latency();
      std::cout << "chord latency: " << lat.samples << " samples, mean " << lat.mean_ms << " ms, max " << lat.max_ms
                << " ms\n";
    } else if (*extract) {
      const auto frames = io::read_raw_session(in_path);
      const auto samples = extract_features(frames);
      io::write_feature_session(out_dir, samples);
      std::cout << samples.size() << " feature windows\n";
    } else if (*record) {
      const ExperimentConfig config = load_experiment_config(config_path);
      const SubjectProfile profile = make_profile(config.subject);
      Rng rng = make_rng(seed, "raw", static_cast<std::uint64_t>(movement));
      io::write_raw_session(out_dir, emit_raw(profile, MovementId(movement), duration_ms, rng));
    } else if (*calibrate) {
      const ExperimentConfig config = load_experiment_config(config_path);
      std::stringstream ss(noise_text);
      std::string item;
      const auto seeds = parse_seeds(seeds_text);
      std::cout << "noise_scale mean_mi\n";
      while (std::getline(ss, item, ',')) {
        double mi = 0.0;
        for (auto s : seeds) {
          SubjectSpec spec = config.subject;
          spec.noise_scale = std::stod(item);
          spec.seed = derive_seed(s, "subject", 0);
          mi += measure_gameplay_mi(spec, config.chart_seed, s);
        }
        std::printf("%-11s %.4f\n", item.c_str(), mi / static_cast<double>(seeds.size()));
      }
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
