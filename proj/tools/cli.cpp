#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "headfuse/bandwidth.hpp"
#include "headfuse/checkpoint.hpp"
#include "headfuse/codec.hpp"
#include "headfuse/errors.hpp"
#include "headfuse/eval.hpp"
#include "headfuse/json_io.hpp"
#include "headfuse/training.hpp"

namespace headfuse::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Kind { kInt, kUInt, kDouble, kString, kFlag };

struct OptionSpec {
  const char* flag;  // without leading dashes; JSON key is the same with '_'
  Kind kind;
  const char* help;
};

const std::vector<OptionSpec> kCommon = {
    {"config", Kind::kString, "JSON config file; flags override its keys"},
    {"output", Kind::kString, "output directory"},
    {"overwrite", Kind::kFlag, "reuse a non-empty output directory instead of a timestamped sibling"},
    {"seed", Kind::kUInt, "base seed (fallback: HEADFUSE_SEED, then 42)"},
    {"jobs", Kind::kInt, "maximum worker threads"},
    {"log-level", Kind::kString, "trace|debug|info|warn|error|off"},
};

const OptionSpec kScenes{"scenes", Kind::kInt, "number of generated scenes"};
const OptionSpec kScenario{"scenario", Kind::kString, "scenario config (or full scenario) JSON file"};
const OptionSpec kStrategy{"strategy", Kind::kString, "none|late|late@<t>|hetero|homo"};
const OptionSpec kCheckpoint{"checkpoint", Kind::kString, "complementary-fusion checkpoint"};
const OptionSpec kDecode{"decode-threshold", Kind::kDouble, "score threshold for decoding boxes"};
const OptionSpec kNms{"nms-iou", Kind::kDouble, "NMS IoU threshold"};
const OptionSpec kCodec{"codec", Kind::kString, "none|deflate"};
const OptionSpec kQuant{"quantization", Kind::kString, "float32|uint8"};
const OptionSpec kFps{"fps", Kind::kDouble, "frames per second for bandwidth"};

const std::map<std::string, std::vector<OptionSpec>>& command_options() {
  static const std::map<std::string, std::vector<OptionSpec>> table = {
      {"simulate", {kScenes, kScenario, kStrategy, kCheckpoint, kDecode, kNms, kCodec, kQuant}},
      {"train",
       {kScenes, kScenario, kCodec, kQuant,
        {"epochs", Kind::kInt, "training epochs"},
        {"lr", Kind::kDouble, "Adam learning rate"},
        {"init-seed", Kind::kUInt, "parameter initialization seed (default: seed)"},
        {"positive-radius", Kind::kInt, "neighbourhood of supervised cells"},
        {"checkpoint", Kind::kString, "checkpoint path to write (default: <output>/checkpoint.bin)"}}},
      {"run", {kScenario, kStrategy, kCheckpoint, kDecode, kNms, kCodec, kQuant}},
      {"eval",
       {kScenes, kScenario, kCheckpoint, kDecode, kNms, kCodec, kQuant, kFps,
        {"strategies", Kind::kString, "comma-separated strategies"},
        {"intermediate", Kind::kFlag, "append the 256-channel intermediate reference row"},
        {"ap-variant", Kind::kString, "all-point|11-point"}}},
      {"bandwidth",
       {kScenes, kScenario, kCodec, kQuant, kFps, kDecode, kNms,
        {"preset", Kind::kString, "v2v4real|opv2v|all"},
        {"preset-file", Kind::kString, "JSON grid preset (object or array)"},
        {"measure", Kind::kFlag, "also measure real message sizes on generated scenes"}}},
      {"sweep",
       {kScenes, kScenario, kDecode, kNms,
        {"iou", Kind::kDouble, "IoU for labelling sender detections"},
        {"step", Kind::kDouble, "threshold grid step"}}},
  };
  return table;
}

std::string key_of(const char* flag) {
  std::string k(flag);
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

json convert(const OptionSpec& spec, const std::string& text) {
  try {
    std::size_t used = 0;
    switch (spec.kind) {
      case Kind::kInt: {
        const long long v = std::stoll(text, &used);
        if (used == text.size()) return v;
        break;
      }
      case Kind::kUInt: {
        if (!text.empty() && text[0] == '-') break;
        const unsigned long long v = std::stoull(text, &used);
        if (used == text.size()) return v;
        break;
      }
      case Kind::kDouble: {
        const double v = std::stod(text, &used);
        if (used == text.size()) return v;
        break;
      }
      case Kind::kString:
        return text;
      case Kind::kFlag:
        return true;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("bad value '" + text + "' for --" + spec.flag);
}

// Effective settings: defaults < config file < flags.
class Settings {
 public:
  explicit Settings(json merged) : j_(std::move(merged)) {}

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& raw(const std::string& key) const { return j_.at(key); }

  template <typename T>
  T get(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing setting '" + key + "'");
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("setting '" + key + "' has the wrong type");
    }
  }
  template <typename T>
  T get_or(const std::string& key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }
  const json& all() const { return j_; }

 private:
  json j_;
};

std::uint64_t default_seed() {
  if (const char* env = std::getenv("HEADFUSE_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const std::string text(env);
      const unsigned long long v = std::stoull(text, &used);
      if (used == text.size() && !text.empty() && text[0] != '-') return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("HEADFUSE_SEED is not an unsigned integer: '") + env + "'");
  }
  return 42;
}

fs::path resolve_output(const fs::path& requested, bool overwrite) {
  std::error_code ec;
  if (!fs::exists(requested, ec)) {
    fs::create_directories(requested, ec);
    if (ec) throw ConfigError("cannot create output directory " + requested.string() + ": " + ec.message());
    return requested;
  }
  if (!fs::is_directory(requested)) throw ConfigError("output path is not a directory: " + requested.string());
  if (overwrite || fs::is_empty(requested)) return requested;

  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
  fs::path base = requested;
  if (base.filename().empty()) base = base.parent_path();
  fs::path candidate = base.string() + "-" + stamp;
  for (int k = 2; fs::exists(candidate); ++k) {
    candidate = base.string() + "-" + stamp + "-" + std::to_string(k);
  }
  fs::create_directories(candidate, ec);
  if (ec) throw ConfigError("cannot create output directory " + candidate.string() + ": " + ec.message());
  spdlog::info("{} is not empty; writing to {}", requested.string(), candidate.string());
  return candidate;
}

ScenarioConfig scenario_config_from(const Settings& s) {
  if (!s.has("scenario")) return {};
  const json& v = s.raw("scenario");
  if (v.is_object()) return ScenarioConfig::from_json(v);
  if (v.is_string()) return ScenarioConfig::from_json(read_json_file(v.get<std::string>()));
  throw ConfigError("'scenario' must be a file path or an object");
}

EpisodeThresholds thresholds_from(const Settings& s) {
  EpisodeThresholds t;
  t.decode_threshold = s.get_or("decode_threshold", t.decode_threshold);
  t.nms_iou = s.get_or("nms_iou", t.nms_iou);
  try {
    t.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return t;
}

QuantMode quant_from(const std::string& name) {
  if (name == "float32") return QuantMode::kFloat32;
  if (name == "uint8") return QuantMode::kUint8;
  throw ConfigError("unknown quantization '" + name + "' (expected float32 or uint8)");
}

EpisodeOptions episode_options_from(const Settings& s) {
  EpisodeOptions o;
  o.codec = s.get_or<std::string>("codec", o.codec);
  make_codec(o.codec);
  o.quantization = quant_from(s.get_or<std::string>("quantization", "float32"));
  return o;
}

std::optional<ComplementaryParams> checkpoint_from(const Settings& s) {
  const std::string path = s.get_or<std::string>("checkpoint", "");
  if (path.empty()) return std::nullopt;
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path);
  return load_checkpoint(path);
}

std::vector<FusionStrategy> strategies_from(const std::string& list) {
  std::vector<FusionStrategy> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (!item.empty()) out.push_back(parse_strategy(item));
  }
  if (out.empty()) throw ConfigError("no strategies given");
  return out;
}

int positive_int(const Settings& s, const std::string& key, int fallback) {
  const int v = s.get_or(key, fallback);
  if (v < 1) throw ConfigError("'" + key + "' must be >= 1");
  return v;
}

std::string indexed(const char* stem, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.%s", stem, i, ext);
  return buf;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
template <typename Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mutex;
  auto worker = [&]() {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < workers; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

json cmd_simulate(const Settings& s, const fs::path& out_dir) {
  const ScenarioConfig cfg = scenario_config_from(s);
  const int scenes = positive_int(s, "scenes", 1);
  const auto strategy = parse_strategy(s.get_or<std::string>("strategy", "hetero"));
  const auto params = checkpoint_from(s);
  if (strategy.kind == StrategyKind::kHomoHead && !params) {
    throw ConfigError("strategy homo needs --checkpoint");
  }
  const auto thresholds = thresholds_from(s);
  const auto options = episode_options_from(s);
  const auto seed = s.get<std::uint64_t>("seed");

  std::vector<Scenario> scenarios(static_cast<std::size_t>(scenes));
  std::vector<EpisodeResult> results(static_cast<std::size_t>(scenes));
  parallel_for(scenes, s.get<int>("jobs"), [&](int i) {
    scenarios[static_cast<std::size_t>(i)] = generate_scenario(seed + static_cast<std::uint64_t>(i), cfg);
    results[static_cast<std::size_t>(i)] = run_episode(scenarios[static_cast<std::size_t>(i)], strategy,
                                                       params ? &*params : nullptr, thresholds, options);
  });
  std::size_t detections = 0;
  for (int i = 0; i < scenes; ++i) {
    write_json_file(out_dir / indexed("scene", i, "json"), scenarios[static_cast<std::size_t>(i)].to_json());
    write_json_file(out_dir / indexed("result", i, "json"), results[static_cast<std::size_t>(i)].to_json());
    for (const auto& f : results[static_cast<std::size_t>(i)].frames) detections += f.detections.size();
  }
  spdlog::info("simulated {} scene(s) with strategy {}", scenes, strategy_name(strategy));
  return {{"scenes", scenes}, {"strategy", strategy_name(strategy)}, {"detections", detections}};
}

json cmd_train(const Settings& s, const fs::path& out_dir) {
  const ScenarioConfig cfg = scenario_config_from(s);
  const int scenes = positive_int(s, "scenes", 20);
  const auto options = episode_options_from(s);
  const auto seed = s.get<std::uint64_t>("seed");
  TrainConfig tc;
  tc.epochs = s.get_or("epochs", tc.epochs);
  if (tc.epochs < 0) throw ConfigError("'epochs' must be >= 0");
  tc.adam.lr = s.get_or("lr", tc.adam.lr);
  if (!(tc.adam.lr > 0.0)) throw ConfigError("'lr' must be positive");
  const int radius = s.get_or("positive_radius", 1);
  if (radius < 0) throw ConfigError("'positive_radius' must be >= 0");
  const auto init_seed = s.get_or<std::uint64_t>("init_seed", seed);

  std::vector<std::vector<TrainingSample>> per_scene(static_cast<std::size_t>(scenes));
  parallel_for(scenes, s.get<int>("jobs"), [&](int i) {
    const Scenario sc = generate_scenario(seed + static_cast<std::uint64_t>(i), cfg);
    per_scene[static_cast<std::size_t>(i)] = make_training_samples(sc, options, radius);
  });
  std::vector<TrainingSample> data;
  for (auto& v : per_scene) {
    for (auto& sample : v) data.push_back(std::move(sample));
  }
  if (data.empty()) throw ConfigError("training scenes produced no samples (no sender in range)");

  const int reg_channels = default_anchor_grid(cfg.grid).reg_channels();
  const int every = std::max(1, tc.epochs / 10);
  const TrainResult result = train_complementary(
      ComplementaryParams::initialize(reg_channels, init_seed), data, tc, [every](int epoch, double loss) {
        if (epoch % every == 0) spdlog::info("epoch {} mean loss {:.6g}", epoch, loss);
      });

  const fs::path ckpt = s.has("checkpoint") ? fs::path(s.get<std::string>("checkpoint"))
                                            : out_dir / "checkpoint.bin";
  save_checkpoint(result.params, ckpt);
  std::ostringstream losses;
  losses << "epoch,loss\n";
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) losses << e << ',' << result.epoch_losses[e] << '\n';
  write_text_file(out_dir / "losses.csv", losses.str());
  spdlog::info("loss {:.6g} -> {:.6g} over {} samples", result.initial_loss, result.final_loss, data.size());
  return {{"checkpoint", ckpt.string()},
          {"samples", data.size()},
          {"epochs", tc.epochs},
          {"lr", tc.adam.lr},
          {"initial_loss", result.initial_loss},
          {"final_loss", result.final_loss}};
}

json cmd_run(const Settings& s, const fs::path& out_dir) {
  if (!s.has("scenario")) throw ConfigError("run needs --scenario");
  const json& v = s.raw("scenario");
  const json doc = v.is_string() ? read_json_file(v.get<std::string>()) : v;
  const Scenario scenario = doc.contains("agents")
                                ? Scenario::from_json(doc)
                                : generate_scenario(s.get<std::uint64_t>("seed"), ScenarioConfig::from_json(doc));
  const auto strategy = parse_strategy(s.get_or<std::string>("strategy", "hetero"));
  const auto params = checkpoint_from(s);
  if (strategy.kind == StrategyKind::kHomoHead && !params) {
    throw ConfigError("strategy homo needs --checkpoint");
  }
  const EpisodeResult result = run_episode(scenario, strategy, params ? &*params : nullptr,
                                           thresholds_from(s), episode_options_from(s));
  write_json_file(out_dir / "result.json", result.to_json());
  std::size_t detections = 0;
  for (const auto& f : result.frames) detections += f.detections.size();
  return {{"strategy", result.strategy}, {"frames", result.frames.size()}, {"detections", detections}};
}

json cmd_eval(const Settings& s, const fs::path& out_dir) {
  const ScenarioConfig cfg = scenario_config_from(s);
  const int scenes = positive_int(s, "scenes", 50);
  const auto strategies = strategies_from(s.get_or<std::string>("strategies", "none,late,hetero"));
  const auto params = checkpoint_from(s);
  CompareOptions o;
  o.thresholds = thresholds_from(s);
  o.episode = episode_options_from(s);
  o.fps = s.get_or("fps", o.fps);
  if (!(o.fps > 0.0)) throw ConfigError("'fps' must be positive");
  o.jobs = s.get<int>("jobs");
  o.intermediate_row = s.get_or("intermediate", false);
  const std::string variant = s.get_or<std::string>("ap_variant", "all-point");
  if (variant == "11-point") {
    o.eval.variant = ApVariant::kInterpolated11;
  } else if (variant != "all-point") {
    throw ConfigError("unknown ap_variant '" + variant + "'");
  }
  const auto suite = make_suite(s.get<std::uint64_t>("seed"), scenes, cfg);
  const ComparisonTable table = compare_strategies(suite, strategies, params ? &*params : nullptr, o);
  write_text_file(out_dir / "comparison.csv", table.to_csv());
  write_json_file(out_dir / "comparison.json", table.to_json());
  return {{"scenes", scenes}, {"rows", table.to_json().at("rows")}};
}

json cmd_bandwidth(const Settings& s, const fs::path& out_dir) {
  std::vector<GridPreset> presets;
  if (s.has("preset_file")) {
    const json doc = read_json_file(s.get<std::string>("preset_file"));
    if (doc.is_array()) {
      for (const auto& p : doc) presets.push_back(GridPreset::from_json(p));
    } else {
      presets.push_back(GridPreset::from_json(doc));
    }
  } else {
    const std::string name = s.get_or<std::string>("preset", "all");
    presets = name == "all" ? builtin_presets() : std::vector<GridPreset>{find_preset(name)};
  }
  if (s.has("fps")) {
    for (auto& p : presets) p.fps = s.get<double>("fps");
  }

  json summary_presets = json::array();
  for (const auto& p : presets) {
    const BandwidthReport r = preset_report(p);
    write_text_file(out_dir / ("bandwidth_" + p.name + ".csv"), r.to_csv());
    json j = r.to_json();
    j["preset"] = p.to_json();
    write_json_file(out_dir / ("bandwidth_" + p.name + ".json"), j);
    const auto* head = r.find("head");
    const auto* inter = r.find("intermediate");
    const auto* late = r.find("late");
    summary_presets.push_back({{"name", p.name},
                               {"late_mbps", late->mbps},
                               {"head_mbps", head->mbps},
                               {"intermediate_mbps", inter->mbps},
                               {"ratio", head->ratio_vs_intermediate}});
  }
  json summary{{"presets", summary_presets}};

  if (s.get_or("measure", false)) {
    const ScenarioConfig cfg = scenario_config_from(s);
    const int scenes = positive_int(s, "scenes", 10);
    const auto suite = make_suite(s.get<std::uint64_t>("seed"), scenes, cfg);
    const auto thresholds = thresholds_from(s);
    const auto options = episode_options_from(s);
    const double fps = s.get_or("fps", 10.0);
    const BEVGridSpec& g = cfg.grid;
    BandwidthReport measured = make_report(fps, dense_map_bytes(256, g.height(), g.width()));
    const int head_channels = default_anchor_grid(g).head_channels();
    for (const auto& strategy : {FusionStrategy::late(), FusionStrategy::hetero_head()}) {
      std::vector<std::size_t> raw;
      std::vector<std::size_t> packed;
      for (const auto& sc : suite) {
        for (const auto& f : run_episode(sc, strategy, nullptr, thresholds, options).frames) {
          if (!f.sender) continue;
          raw.push_back(f.message_bytes);
          packed.push_back(f.compressed_bytes);
        }
      }
      const bool late = strategy.kind == StrategyKind::kLateFusion;
      measured.add(late ? "late" : "head", late ? 8 : head_channels, raw, packed);
    }
    measured.add_intermediate(256, g.height(), g.width());
    write_text_file(out_dir / "bandwidth_measured.csv", measured.to_csv());
    write_json_file(out_dir / "bandwidth_measured.json", measured.to_json());
    summary["measured"] = measured.to_json().at("rows");
  }
  return summary;
}

json cmd_sweep(const Settings& s, const fs::path& out_dir) {
  const ScenarioConfig cfg = scenario_config_from(s);
  const int scenes = positive_int(s, "scenes", 20);
  const double iou = s.get_or("iou", 0.5);
  const double step = s.get_or("step", 0.05);
  if (!(step > 0.0 && step <= 1.0)) throw ConfigError("'step' must be in (0, 1]");
  const auto thresholds = thresholds_from(s);
  const auto suite = make_suite(s.get<std::uint64_t>("seed"), scenes, cfg);
  std::vector<EpisodeResult> episodes(suite.size());
  parallel_for(static_cast<int>(suite.size()), s.get<int>("jobs"), [&](int i) {
    episodes[static_cast<std::size_t>(i)] =
        run_episode(suite[static_cast<std::size_t>(i)], FusionStrategy::no_fusion(), nullptr, thresholds);
  });
  const auto frames = sender_frames(episodes);
  std::vector<LabeledDetection> labeled;
  try {
    labeled = label_detections(frames, iou);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  std::vector<double> grid;
  const int steps = static_cast<int>(std::floor(1.0 / step + 1e-9));
  for (int i = 0; i <= steps; ++i) grid.push_back(std::min(1.0, std::round(i * step * 1e9) / 1e9));
  const FpSweep sweep = fp_threshold_sweep(labeled, grid);
  write_text_file(out_dir / "sweep.csv", sweep.to_csv());
  write_json_file(out_dir / "sweep.json", sweep.to_json());
  bool monotone = true;
  for (std::size_t i = 1; i < sweep.curve.size(); ++i) {
    monotone = monotone && sweep.curve[i].fp_count <= sweep.curve[i - 1].fp_count;
  }
  return {{"scenes", scenes},
          {"sender_frames", frames.size()},
          {"detections", labeled.size()},
          {"monotone", monotone},
          {"zero_fp_threshold", sweep.zero_fp_threshold},
          {"grid_zero_fp_threshold", sweep.grid_zero_fp_threshold ? json(*sweep.grid_zero_fp_threshold)
                                                                  : json(nullptr)}};
}

using Handler = json (*)(const Settings&, const fs::path&);

Handler handler_for(const std::string& name) {
  static const std::map<std::string, Handler> table = {
      {"simulate", cmd_simulate}, {"train", cmd_train},         {"run", cmd_run},
      {"eval", cmd_eval},         {"bandwidth", cmd_bandwidth}, {"sweep", cmd_sweep},
  };
  return table.at(name);
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("headfuse", sink);
  logger->set_pattern("[%H:%M:%S.%e] [%l] %v");
  return logger;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto previous = spdlog::default_logger();
  auto logger = make_logger(err);
  spdlog::set_default_logger(logger);
  struct Restore {
    std::shared_ptr<spdlog::logger> prev;
    ~Restore() { spdlog::set_default_logger(prev); }
  } restore{previous};

  CLI::App app{"Head-level cooperative perception fusion experiments", "headfuse"};
  app.require_subcommand(1);
  std::map<std::string, std::map<std::string, std::pair<OptionSpec, std::string>>> values;
  std::map<std::string, std::map<std::string, CLI::Option*>> handles;
  std::map<std::string, std::map<std::string, bool>> flags;
  const std::map<std::string, const char*> descriptions = {
      {"simulate", "generate scenes and run one strategy on each"},
      {"train", "train complementary regression fusion on generated scenes"},
      {"run", "run one strategy on one scenario file"},
      {"eval", "compare strategies (AP50, AP70, Mbps) on a scene suite"},
      {"bandwidth", "bandwidth report for dataset-shaped grid presets"},
      {"sweep", "sender false positives versus transmission threshold"},
  };

  for (const auto& [name, specs] : command_options()) {
    CLI::App* sub = app.add_subcommand(name, descriptions.at(name));
    std::vector<OptionSpec> all = kCommon;
    all.insert(all.end(), specs.begin(), specs.end());
    for (const auto& spec : all) {
      const std::string key = key_of(spec.flag);
      const std::string flag = std::string("--") + spec.flag;
      if (spec.kind == Kind::kFlag) {
        flags[name][key] = false;
        handles[name][key] = sub->add_flag(flag, flags[name][key], spec.help);
      } else {
        values[name][key] = {spec, std::string()};
        handles[name][key] = sub->add_option(flag, values[name][key].second, spec.help);
      }
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "headfuse: " << e.what() << "\n";
    return kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    json flag_json = json::object();
    for (const auto& [key, entry] : values[command]) {
      if (handles[command][key]->count() > 0) flag_json[key] = convert(entry.first, entry.second);
    }
    for (const auto& [key, set] : flags[command]) {
      if (set) flag_json[key] = true;
    }
    if (flag_json.contains("log_level")) {
      const auto level = spdlog::level::from_str(flag_json["log_level"].get<std::string>());
      logger->set_level(level);
    }

    json merged{{"seed", nullptr}, {"jobs", 1}, {"output", "out/" + command}, {"overwrite", false}};
    if (flag_json.contains("config")) {
      const json file = read_json_file(flag_json["config"].get<std::string>());
      if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
      for (auto it = file.begin(); it != file.end(); ++it) {
        std::string key = it.key();
        std::replace(key.begin(), key.end(), '-', '_');
        merged[key] = it.value();
      }
    }
    for (auto it = flag_json.begin(); it != flag_json.end(); ++it) merged[it.key()] = it.value();
    if (merged["seed"].is_null()) merged["seed"] = default_seed();
    const Settings settings(merged);
    if (settings.has("log_level")) {
      logger->set_level(spdlog::level::from_str(settings.get<std::string>("log_level")));
    }
    if (settings.get<int>("jobs") < 1) throw ConfigError("'jobs' must be >= 1");
    settings.get<std::uint64_t>("seed");

    const fs::path out_dir =
        resolve_output(settings.get<std::string>("output"), settings.get_or("overwrite", false));
    const auto start = std::chrono::steady_clock::now();
    json summary = handler_for(command)(settings, out_dir);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    spdlog::info("{} finished in {:.2f}s", command, seconds);
    json line{{"command", command},
              {"status", "ok"},
              {"seed", settings.get<std::uint64_t>("seed")},
              {"output", out_dir.string()}};
    for (auto it = summary.begin(); it != summary.end(); ++it) line[it.key()] = it.value();
    out << line.dump() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "headfuse " << command << ": configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidInput& e) {
    err << "headfuse " << command << ": invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "headfuse " << command << ": error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace headfuse::cli
