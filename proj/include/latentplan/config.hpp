#pragma once

// Model/training configuration with two presets: the full-scale defaults and
// a small "desk" preset for fast local experiments. Configs load from flat
// key=value text files.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace latentplan {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Config {
  // scene encoder
  int dim = 256;          // feature width D
  int enc_layers = 4;
  int enc_heads = 4;
  int n_max = 64;         // observation slots, ego at slot 0
  double fov_w = 80.0;    // ego-frame window, meters
  double fov_h = 20.0;
  double route_seg_len = 5.0;

  // adapter + latent world model
  int adapter_layers = 4;
  int adapter_heads = 4;
  int latent_tokens = 32;  // M
  int lwm_layers = 8;
  int lwm_heads = 8;
  int context_steps = 2;   // t
  double log_std_min = -6.0;
  double log_std_max = 2.0;

  // planner
  int modes = 6;              // mixture components K
  int planner_layers = 3;     // J
  int intermediate_layer = 1; // I
  int mpa_heads = 4;
  double sigma_min = 1e-4;
  double action_clamp = 5.0;  // |dx|,|dy| bound in meters per step

  int ffn_mult = 4;

  // ablation switches
  bool use_lwm = true;        // false -> planner never sees latent tokens
  bool naive_lwm = false;     // train the world model on ground-truth actions
  bool detach_latent = false; // stop gradient through predicted latent samples

  // training
  int batch = 256;            // full-scale runs used 2500
  int epochs = 10;
  double lr0 = 2e-4;
  double world_weight = 0.001;
  double clip_norm = 0.0;     // global gradient-norm clip; 0 disables
  int warmup_steps = 0;       // linear LR warmup before the cosine decay
  std::uint64_t seed = 0;

  // recovery augmentation: extra samples with the ego pushed off the expert
  // pose and a label that steers back toward the expert path. Counters the
  // covariate shift of closed-loop rollout on expert-only data.
  double perturb_prob = 0.0;      // expected extra samples per trajectory position
  double perturb_dx = 0.5;        // longitudinal offset bound, meters
  double perturb_dy = 1.0;        // lateral offset bound, meters
  double perturb_dyaw = 0.15;     // heading offset bound, radians
  double perturb_recovery = 0.3;  // fraction of the offset removed per step
  double perturb_speed = 0.0;     // relative jitter on the observed ego speed

  // small preset that trains in minutes on one core
  static Config desk() {
    Config c;
    c.dim = 32;
    c.enc_layers = 2;
    c.enc_heads = 2;
    c.n_max = 16;
    c.adapter_layers = 2;
    c.adapter_heads = 2;
    c.latent_tokens = 8;
    c.lwm_layers = 2;
    c.lwm_heads = 2;
    c.mpa_heads = 2;
    c.ffn_mult = 2;
    c.batch = 64;
    c.epochs = 4;
    return c;
  }

  void validate() const {
    auto req = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("config: ") + what);
    };
    req(dim > 0 && n_max > 0 && latent_tokens > 0 && modes > 0, "dimensions must be positive");
    req(enc_layers > 0 && adapter_layers > 0 && lwm_layers > 0 && planner_layers > 0,
        "layer counts must be positive");
    req(dim % enc_heads == 0 && dim % adapter_heads == 0 && dim % lwm_heads == 0 &&
            dim % mpa_heads == 0,
        "dim must divide by every head count");
    req(intermediate_layer >= 1 && intermediate_layer < planner_layers,
        "intermediate layer index must satisfy 1 <= I < J");
    req(context_steps >= 1, "context must cover at least one step");
    req(fov_w > 0 && fov_h > 0 && route_seg_len > 0, "geometry params must be positive");
    req(log_std_min < log_std_max, "log_std bounds out of order");
    req(batch > 0 && epochs > 0 && lr0 > 0 && world_weight >= 0, "training params out of range");
    req(clip_norm >= 0 && warmup_steps >= 0, "stabilizer params out of range");
    req(perturb_prob >= 0 && perturb_dx >= 0 && perturb_dy >= 0 && perturb_dyaw >= 0 &&
            perturb_recovery >= 0 && perturb_recovery <= 1 && perturb_speed >= 0 &&
            perturb_speed < 1,
        "perturbation params out of range");
  }

  bool set(const std::string& key, const std::string& value) {
    auto as_int = [&] { return std::stoi(value); };
    auto as_f = [&] { return std::stod(value); };
    auto as_bool = [&] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw ConfigError("config: bad bool for " + key + ": " + value);
    };
    if (key == "dim") dim = as_int();
    else if (key == "enc_layers") enc_layers = as_int();
    else if (key == "enc_heads") enc_heads = as_int();
    else if (key == "n_max") n_max = as_int();
    else if (key == "fov_w") fov_w = as_f();
    else if (key == "fov_h") fov_h = as_f();
    else if (key == "route_seg_len") route_seg_len = as_f();
    else if (key == "adapter_layers") adapter_layers = as_int();
    else if (key == "adapter_heads") adapter_heads = as_int();
    else if (key == "latent_tokens") latent_tokens = as_int();
    else if (key == "lwm_layers") lwm_layers = as_int();
    else if (key == "lwm_heads") lwm_heads = as_int();
    else if (key == "context_steps") context_steps = as_int();
    else if (key == "log_std_min") log_std_min = as_f();
    else if (key == "log_std_max") log_std_max = as_f();
    else if (key == "modes") modes = as_int();
    else if (key == "planner_layers") planner_layers = as_int();
    else if (key == "intermediate_layer") intermediate_layer = as_int();
    else if (key == "mpa_heads") mpa_heads = as_int();
    else if (key == "sigma_min") sigma_min = as_f();
    else if (key == "action_clamp") action_clamp = as_f();
    else if (key == "ffn_mult") ffn_mult = as_int();
    else if (key == "use_lwm") use_lwm = as_bool();
    else if (key == "naive_lwm") naive_lwm = as_bool();
    else if (key == "detach_latent") detach_latent = as_bool();
    else if (key == "batch") batch = as_int();
    else if (key == "epochs") epochs = as_int();
    else if (key == "lr0") lr0 = as_f();
    else if (key == "world_weight") world_weight = as_f();
    else if (key == "clip_norm") clip_norm = as_f();
    else if (key == "warmup_steps") warmup_steps = as_int();
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "perturb_prob") perturb_prob = as_f();
    else if (key == "perturb_dx") perturb_dx = as_f();
    else if (key == "perturb_dy") perturb_dy = as_f();
    else if (key == "perturb_dyaw") perturb_dyaw = as_f();
    else if (key == "perturb_recovery") perturb_recovery = as_f();
    else if (key == "perturb_speed") perturb_speed = as_f();
    else return false;
    return true;
  }

  std::string dump() const {
    std::ostringstream os;
    os << "dim=" << dim << "\nenc_layers=" << enc_layers << "\nenc_heads=" << enc_heads
       << "\nn_max=" << n_max << "\nfov_w=" << fov_w << "\nfov_h=" << fov_h
       << "\nroute_seg_len=" << route_seg_len << "\nadapter_layers=" << adapter_layers
       << "\nadapter_heads=" << adapter_heads << "\nlatent_tokens=" << latent_tokens
       << "\nlwm_layers=" << lwm_layers << "\nlwm_heads=" << lwm_heads
       << "\ncontext_steps=" << context_steps << "\nlog_std_min=" << log_std_min
       << "\nlog_std_max=" << log_std_max << "\nmodes=" << modes
       << "\nplanner_layers=" << planner_layers
       << "\nintermediate_layer=" << intermediate_layer << "\nmpa_heads=" << mpa_heads
       << "\nsigma_min=" << sigma_min << "\naction_clamp=" << action_clamp
       << "\nffn_mult=" << ffn_mult << "\nuse_lwm=" << (use_lwm ? "true" : "false")
       << "\nnaive_lwm=" << (naive_lwm ? "true" : "false")
       << "\ndetach_latent=" << (detach_latent ? "true" : "false") << "\nbatch=" << batch
       << "\nepochs=" << epochs << "\nlr0=" << lr0 << "\nworld_weight=" << world_weight
       << "\nclip_norm=" << clip_norm << "\nwarmup_steps=" << warmup_steps
       << "\nseed=" << seed << "\nperturb_prob=" << perturb_prob
       << "\nperturb_dx=" << perturb_dx << "\nperturb_dy=" << perturb_dy
       << "\nperturb_dyaw=" << perturb_dyaw << "\nperturb_recovery=" << perturb_recovery
       << "\nperturb_speed=" << perturb_speed << "\n";
    return os.str();
  }
};

// Flat key=value text; '#' starts a comment; blank lines skipped.
inline Config parse_config(std::istream& is, Config base = Config{}) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      auto a = s.find_first_not_of(" \t");
      auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      if (!base.set(key, value))
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown key " + key);
    } catch (const std::invalid_argument&) {
      throw ConfigError("config line " + std::to_string(lineno) + ": bad value for " + key);
    }
  }
  base.validate();
  return base;
}

inline Config load_config(const std::string& path, Config base = Config{}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  return parse_config(f, base);
}

}  // namespace latentplan
