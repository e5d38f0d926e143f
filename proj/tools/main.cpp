// Command-line front end: dataset generation, training, closed-loop
// evaluation, single-episode rollout, SVG rendering and result tables.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"
#include "latentplan/trainer.hpp"

namespace fs = std::filesystem;
using namespace latentplan;

namespace {

Config make_config(const std::string& config_path, bool desk, std::uint64_t seed,
                   bool have_seed) {
  Config base = desk ? Config::desk() : Config{};
  Config cfg = config_path.empty() ? base : load_config(config_path, base);
  if (have_seed) cfg.seed = seed;
  cfg.validate();
  return cfg;
}

void print_resolved(const Config& cfg, const std::string& command) {
  std::cout << "# command: " << command << "\n# resolved config:\n";
  std::istringstream is(cfg.dump());
  std::string line;
  while (std::getline(is, line)) std::cout << "#   " << line << "\n";
}

DatasetCounts parse_counts(const std::string& spec) {
  DatasetCounts c;
  std::istringstream is(spec);
  std::string item;
  while (std::getline(is, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw ConfigError("bad --counts entry (want type=count): " + item);
    const std::string key = item.substr(0, eq);
    const int n = std::stoi(item.substr(eq + 1));
    if (n < 0) throw ConfigError("negative count for " + key);
    if (key == "stationary") c.stationary = n;
    else if (key == "straight") c.straight = n;
    else if (key == "turnl" || key == "turn_left") c.turn_left = n;
    else if (key == "turnr" || key == "turn_right") c.turn_right = n;
    else if (key == "uturn") c.uturn = n;
    else throw ConfigError("unknown scene type in --counts: " + key);
  }
  return c;
}

std::vector<Scenario> load_split(const std::string& data, const std::string& split) {
  std::vector<Scenario> out;
  for (const auto& entry : read_manifest(data, split))
    out.push_back(load_dataset_scenario(data, split, entry.id));
  return out;
}

std::vector<TrainingSample> collect_samples(const std::vector<Scenario>& scenarios,
                                            const Config& cfg) {
  std::vector<TrainingSample> samples;
  std::mt19937_64 aug_rng(cfg.seed ^ 0xa5a5a5a5ULL);
  for (const auto& sc : scenarios) {
    auto s = extract_samples(sc, cfg, aug_rng);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()),
                   std::make_move_iterator(s.end()));
  }
  return samples;
}

struct SeedMetrics {
  std::uint64_t seed;
  MetricsReport report;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw TrainerError("cannot write " + path);
  f << text;
}

std::map<std::string, double> read_keyvalues(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw TrainerError("cannot read " + path);
  std::map<std::string, double> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
  }
  return out;
}

// mean and (population) std over per-seed metric values
std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / v.size())};
}

int cmd_gen_data(const std::string& out, const std::string& split, const std::string& counts_spec,
                 int total, std::uint64_t seed) {
  DatasetCounts counts = counts_spec.empty() ? paper_mix(total) : parse_counts(counts_spec);
  std::cout << "# command: gen-data\n# seed: " << seed << "\n";
  auto manifest = write_dataset(out, split, counts, seed);
  std::map<SceneType, int> tally;
  for (const auto& e : manifest) ++tally[e.scene_type];
  std::cout << "wrote " << manifest.size() << " scenarios to " << out << " (split " << split
            << ")\n";
  for (SceneType t : kAllSceneTypes)
    std::cout << "  " << scene_type_name(t) << ": " << tally[t] << "\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& split, const Config& cfg,
              const std::string& out) {
  fs::create_directories(out);
  print_resolved(cfg, "train");
  auto scenarios = load_split(data, split);
  if (scenarios.empty()) throw TrainerError("no scenarios in " + data + "/" + split);
  auto samples = collect_samples(scenarios, cfg);
  std::cout << "# " << scenarios.size() << " scenarios, " << samples.size() << " samples\n";
  Model model(cfg);
  std::ofstream log(out + "/train_log.txt");
  TrainResult res = train(model, samples, &log, out);
  save_checkpoint(model.ps, out + "/final.ckpt");
  write_text(out + "/config.txt", cfg.dump());
  std::cout << "trained " << res.steps << " steps; final loss " << res.final_total << "\n"
            << "checkpoint: " << out << "/final.ckpt\n";
  return 0;
}

int cmd_eval(const std::string& data, const std::string& split, const Config& cfg,
             const std::string& ckpt, const std::string& agents_mode,
             const std::string& seeds_spec, int workers, const std::string& out) {
  print_resolved(cfg, "eval");
  const AgentControlMode agents =
      agents_mode == "idm" ? AgentControlMode::Idm : AgentControlMode::Replay;
  std::vector<std::uint64_t> seeds;
  {
    std::istringstream is(seeds_spec);
    std::string item;
    while (std::getline(is, item, ',')) seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) throw TrainerError("no seeds given");
  auto scenarios = load_split(data, split);
  if (scenarios.empty()) throw TrainerError("no scenarios in " + data + "/" + split);

  Model model(cfg);
  load_checkpoint(model.ps, ckpt);
  std::vector<SeedMetrics> per_seed;
  for (std::uint64_t s : seeds) {
    auto results = evaluate_closed_loop(model, scenarios, s, agents, workers);
    per_seed.push_back({s, aggregate(results)});
    std::cout << "## seed " << s << "\n" << metrics_table(per_seed.back().report) << "\n";
    if (!out.empty())
      write_text(out + ".seed" + std::to_string(s) + ".txt",
                 metrics_keyvalues(per_seed.back().report));
  }
  auto column = [&](auto get) {
    std::vector<double> v;
    for (const auto& sm : per_seed) v.push_back(get(sm.report));
    return mean_std(v);
  };
  auto [arm, ars] = column([](const MetricsReport& r) { return r.ar_band; });
  auto [marm, mars] = column([](const MetricsReport& r) { return r.mar; });
  auto [orm, ors] = column([](const MetricsReport& r) { return r.offroad_rate; });
  auto [crm, crs] = column([](const MetricsReport& r) { return r.collision_rate; });
  auto [prm, prs] = column([](const MetricsReport& r) { return r.progress; });
  std::cout << std::fixed << std::setprecision(2);
  std::cout << "## mean +/- std over " << per_seed.size() << " seeds\n"
            << "AR@[95:75]  " << arm << " +/- " << ars << "\n"
            << "mAR         " << marm << " +/- " << mars << "\n"
            << "OR          " << orm << " +/- " << ors << "\n"
            << "CR          " << crm << " +/- " << crs << "\n"
            << "PR          " << prm << " +/- " << prs << "\n";
  if (!out.empty()) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "ar_band=" << arm << "\nar_band_std=" << ars << "\nmar=" << marm
       << "\nmar_std=" << mars << "\nor=" << orm << "\nor_std=" << ors << "\ncr=" << crm
       << "\ncr_std=" << crs << "\npr=" << prm << "\npr_std=" << prs << "\nseeds="
       << per_seed.size() << "\n";
    write_text(out, os.str());
    std::cout << "results written to " << out << "\n";
  }
  return 0;
}

int cmd_rollout(const std::string& scenario_path, const Config& cfg, const std::string& ckpt,
                std::uint64_t seed, const std::string& out) {
  print_resolved(cfg, "rollout");
  std::ifstream f(scenario_path, std::ios::binary);
  if (!f) throw TrainerError("cannot open scenario " + scenario_path);
  Scenario sc = deserialize_scenario(f);
  EpisodeResult r;
  if (ckpt.empty()) {
    r = run_episode(sc, expert_replay_policy());
  } else {
    Model model(cfg);
    load_checkpoint(model.ps, ckpt);
    r = rollout_episode(model, sc, seed);
  }
  std::ostringstream os;
  os << "# scenario " << scenario_path << "\n"
     << "# progress " << r.progress_ratio << " collided " << r.collided << " offroad "
     << r.offroad << "\n"
     << episode_log(r);
  if (out.empty())
    std::cout << os.str();
  else
    write_text(out, os.str());
  std::cout << "progress " << r.progress_ratio << ", collided " << r.collided << ", offroad "
            << r.offroad << "\n";
  return 0;
}

struct LogFrame {
  Pose2D pose;
  bool collided = false, offroad = false;
};

int cmd_render(const std::string& log_path, std::string scenario_path, const std::string& out) {
  std::ifstream f(log_path);
  if (!f) throw TrainerError("cannot read episode log " + log_path);
  std::vector<LogFrame> frames;
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("# scenario ", 0) == 0 && scenario_path.empty()) {
      scenario_path = line.substr(11);
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    int step;
    LogFrame fr;
    int col, off;
    if (is >> step >> fr.pose.x >> fr.pose.y >> fr.pose.yaw >> col >> off) {
      fr.collided = col;
      fr.offroad = off;
      frames.push_back(fr);
    }
  }
  if (frames.empty()) throw TrainerError("episode log has no frames");

  Scenario sc;
  bool have_scene = false;
  if (!scenario_path.empty()) {
    std::ifstream sf(scenario_path, std::ios::binary);
    if (sf) {
      sc = deserialize_scenario(sf);
      have_scene = true;
    }
  }

  double min_x = 1e18, min_y = 1e18, max_x = -1e18, max_y = -1e18;
  auto grow = [&](double x, double y) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  };
  for (const auto& fr : frames) grow(fr.pose.x, fr.pose.y);
  if (have_scene)
    for (const auto& p : sc.road_polygon) grow(p.x, p.y);
  const double pad = 5, scale = 8;
  min_x -= pad;
  min_y -= pad;
  max_x += pad;
  max_y += pad;
  const double w = (max_x - min_x) * scale, h = (max_y - min_y) * scale;
  auto sx = [&](double x) { return (x - min_x) * scale; };
  auto sy = [&](double y) { return h - (y - min_y) * scale; };  // y up

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  auto polygon = [&](const std::vector<Vec2>& pts, const std::string& style) {
    svg << "<polygon points=\"";
    for (const auto& p : pts) svg << sx(p.x) << "," << sy(p.y) << " ";
    svg << "\" " << style << "/>\n";
  };
  if (have_scene) {
    polygon(sc.road_polygon, "fill=\"#d8d8d8\" stroke=\"#888\"");
    svg << "<polyline points=\"";
    for (const auto& p : sc.route) svg << sx(p.x) << "," << sy(p.y) << " ";
    svg << "\" fill=\"none\" stroke=\"#2a8\" stroke-dasharray=\"4 3\"/>\n";
    for (const auto& track : sc.agents)
      polygon(OrientedBox(track.initial, track.length, track.width).corners(),
              "fill=\"none\" stroke=\"#d80\"");
  }
  svg << "<polyline points=\"";
  for (const auto& fr : frames) svg << sx(fr.pose.x) << "," << sy(fr.pose.y) << " ";
  svg << "\" fill=\"none\" stroke=\"#06c\" stroke-width=\"1.5\"/>\n";
  const double ego_len = have_scene ? sc.ego_length : kEgoLength;
  const double ego_wid = have_scene ? sc.ego_width : kEgoWidth;
  for (std::size_t i = 0; i < frames.size(); i += 10) {
    const auto& fr = frames[i];
    const std::string color = fr.collided ? "#c00" : fr.offroad ? "#c60" : "#06c";
    polygon(OrientedBox(fr.pose, ego_len, ego_wid).corners(),
            "fill=\"none\" stroke=\"" + color + "\"");
  }
  svg << "</svg>\n";
  write_text(out, svg.str());
  std::cout << "rendered " << frames.size() << " frames to " << out << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& files) {
  std::cout << std::left << std::setw(28) << "run" << std::right << std::setw(12) << "AR@[95:75]"
            << std::setw(8) << "OR" << std::setw(8) << "CR" << std::setw(8) << "PR" << "\n";
  std::cout << std::fixed << std::setprecision(2);
  for (const auto& file : files) {
    auto kv = read_keyvalues(file);
    auto get = [&](const std::string& k) {
      auto it = kv.find(k);
      if (it == kv.end()) throw TrainerError("missing key " + k + " in " + file);
      return it->second;
    };
    std::cout << std::left << std::setw(28) << fs::path(file).stem().string() << std::right
              << std::setw(12) << get("ar_band") << std::setw(8) << get("or") << std::setw(8)
              << get("cr") << std::setw(8) << get("pr") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-world-model driving planner toolkit"};
  app.require_subcommand(1);

  // shared model/training options
  std::string config_path, data_dir, split = "train", out, ckpt;
  bool desk = false;
  std::uint64_t seed = 0;
  bool have_seed = false;

  auto add_model_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat key=value config file");
    cmd->add_flag("--desk", desk, "start from the small desk preset");
    cmd->add_option("--seed", seed, "run seed")->each([&](const std::string&) {
      have_seed = true;
    });
  };

  auto* gen = app.add_subcommand("gen-data", "generate a scenario dataset");
  std::string counts_spec;
  int total = 100;
  gen->add_option("--out", data_dir, "output dataset directory")->required();
  gen->add_option("--split", split, "dataset split name");
  gen->add_option("--counts", counts_spec,
                  "per-type counts, e.g. straight=59,stationary=25,turnl=7,turnr=8,uturn=1");
  gen->add_option("--total", total, "total count with the default mix (when --counts is absent)");
  gen->add_option("--seed", seed, "generation seed");

  auto* tr = app.add_subcommand("train", "train a model on a dataset");
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--split", split, "dataset split name");
  tr->add_option("--out", out, "output directory for checkpoints and logs")->required();
  add_model_flags(tr);

  auto* ev = app.add_subcommand("eval", "closed-loop evaluation of a checkpoint");
  std::string agents_mode = "replay", seeds_spec = "0,1,2";
  int workers = 0;
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--split", split, "dataset split name");
  ev->add_option("--ckpt", ckpt, "checkpoint file")->required();
  ev->add_option("--agents", agents_mode, "background agents: replay|idm")
      ->check(CLI::IsMember({"replay", "idm"}));
  ev->add_option("--seeds", seeds_spec, "comma-separated evaluation seeds");
  ev->add_option("--workers", workers, "parallel episode workers (0 = auto)");
  ev->add_option("--out", out, "write key=value results to this file");
  add_model_flags(ev);

  auto* ro = app.add_subcommand("rollout", "roll one scenario closed-loop");
  std::string scenario_path;
  ro->add_option("--scenario", scenario_path, "scenario file")->required();
  ro->add_option("--ckpt", ckpt, "checkpoint (omit for expert replay)");
  ro->add_option("--out", out, "episode log output path");
  add_model_flags(ro);

  auto* re = app.add_subcommand("render", "render an episode log to SVG");
  std::string log_path, render_scenario;
  re->add_option("--episode-log", log_path, "episode log from rollout")->required();
  re->add_option("--scenario", render_scenario, "scenario file (default: from the log)");
  re->add_option("--out", out, "output SVG path")->required();

  auto* rp = app.add_subcommand("report", "tabulate result files side by side");
  std::vector<std::string> result_files;
  rp->add_option("--results", result_files, "key=value result files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // 1 on any usage error, 0 for --help
  }

  try {
    if (gen->parsed()) return cmd_gen_data(data_dir, split, counts_spec, total, seed);
    Config cfg = make_config(config_path, desk, seed, have_seed);
    if (tr->parsed()) return cmd_train(data_dir, split, cfg, out);
    if (ev->parsed())
      return cmd_eval(data_dir, split, cfg, ckpt, agents_mode, seeds_spec, workers, out);
    if (ro->parsed()) return cmd_rollout(scenario_path, cfg, ckpt, seed, out);
    if (re->parsed()) return cmd_render(log_path, render_scenario, out);
    if (rp->parsed()) return cmd_report(result_files);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
