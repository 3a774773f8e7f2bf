#include "slsdf/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace slsdf {

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  if (out.empty()) throw ConfigError("empty integer list: " + s);
  return out;
}

std::string join_int_list(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value,
               const std::filesystem::path& base) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).lexically_normal().string();
  };
  std::stringstream ss(value);
  auto num = [&]() -> double {
    double d;
    ss >> d;
    if (ss.fail()) throw ConfigError("bad numeric value for " + key + ": " + value);
    return d;
  };
  if (key == "preset") cfg.preset = value;  // handled by the loader, recorded here
  else if (key == "calibration") cfg.calibration_path = resolve(value);
  else if (key == "scene") cfg.scene_path = resolve(value);
  else if (key == "out") cfg.out_dir = resolve(value);
  else if (key == "pattern_kind") cfg.patterns.kind = value;
  else if (key == "pattern_scales") cfg.patterns.scales = parse_int_list(value);
  else if (key == "pattern_per_scale") cfg.patterns.per_scale = static_cast<int>(num());
  else if (key == "pattern_budget") cfg.patterns.budget = static_cast<int>(num());
  else if (key == "pattern_seed") cfg.patterns.seed = static_cast<uint64_t>(num());
  else if (key == "pattern_blur") cfg.patterns.blur_sigma = num();
  else if (key == "pattern_vertical_tiles") cfg.patterns.vertical_tiles = static_cast<int>(num());
  else if (key == "gray_bits") cfg.patterns.gray_bits = static_cast<int>(num());
  else if (key == "gray_inverse") cfg.patterns.gray_inverse = num() != 0;
  else if (key == "phase_wavelength") cfg.patterns.phase_wavelength = num();
  else if (key == "noise_sigma") cfg.noise_sigma = num();
  else if (key == "z_near") cfg.train.z_near = num();
  else if (key == "z_far") cfg.train.z_far = num();
  else if (key == "batch_rays") cfg.train.batch_rays = static_cast<int>(num());
  else if (key == "iterations") cfg.train.iterations = static_cast<int>(num());
  else if (key == "phase1_iterations") cfg.train.phase1_iterations = static_cast<int>(num());
  else if (key == "k_coarse") cfg.train.k_coarse = static_cast<int>(num());
  else if (key == "k_fine") cfg.train.k_fine = static_cast<int>(num());
  else if (key == "learning_rate") cfg.train.adam.learning_rate = num();
  else if (key == "adam_beta1") cfg.train.adam.beta1 = num();
  else if (key == "adam_beta2") cfg.train.adam.beta2 = num();
  else if (key == "adam_epsilon") cfg.train.adam.epsilon = num();
  else if (key == "lambda_sc") cfg.train.loss.lambda_sc = num();
  else if (key == "lambda_reg") cfg.train.loss.lambda_reg = num();
  else if (key == "use_rendered_loss") cfg.train.loss.use_rendered = num() != 0;
  else if (key == "b_floor") cfg.train.b_floor = num();
  else if (key == "s_lr_scale") cfg.train.s_lr_scale = num();
  else if (key == "weight_mode") cfg.train.weight_mode = weight_mode_from_name(value);
  else if (key == "train_seed") cfg.train.seed = static_cast<uint64_t>(num());
  else if (key == "chunk_rays") cfg.train.chunk_rays = static_cast<int>(num());
  else if (key == "workers") cfg.train.workers = static_cast<int>(num());
  else if (key == "net_hidden_layers") cfg.net.hidden_layers = static_cast<int>(num());
  else if (key == "net_width") cfg.net.width = static_cast<int>(num());
  else if (key == "net_skip_layer") cfg.net.skip_layer = static_cast<int>(num());
  else if (key == "net_frequencies") cfg.net.encoding.num_frequencies = static_cast<int>(num());
  else if (key == "init_radius") cfg.init_radius = num();
  else throw ConfigError("unknown config key: " + key);
}

}  // namespace

ExperimentConfig make_preset(const std::string& name) {
  ExperimentConfig cfg;
  cfg.preset = name;
  if (name == "desk") {
    // defaults above are the desk scale already
  } else if (name == "paper") {
    // full-scale settings: 2048-ray batches, 32+32 samples, 1000+3000
    // iterations, the full-size MLP (8x256, skip at 4)
    cfg.train.batch_rays = 2048;
    cfg.train.k_coarse = 32;
    cfg.train.k_fine = 32;
    cfg.train.iterations = 4000;
    cfg.train.phase1_iterations = 1000;
    cfg.net.hidden_layers = 8;
    cfg.net.width = 256;
    cfg.net.skip_layer = 4;
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  const std::filesystem::path base = std::filesystem::absolute(path).parent_path();
  std::vector<std::pair<std::string, std::string>> entries;
  std::string preset = "desk";
  std::string line;
  while (std::getline(f, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::stringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    std::string value;
    std::getline(ss, value);
    const size_t start = value.find_first_not_of(" \t");
    value = start == std::string::npos ? "" : value.substr(start);
    const size_t end = value.find_last_not_of(" \t\r");
    if (end != std::string::npos) value = value.substr(0, end + 1);
    if (value.empty()) throw ConfigError("config key without value: " + key);
    if (key == "preset") preset = value;
    else entries.emplace_back(key, value);
  }
  ExperimentConfig cfg = make_preset(preset);
  for (const auto& [key, value] : entries) apply_key(cfg, key, value, base);
  if (!cfg.calibration_path.empty() && !std::filesystem::exists(cfg.calibration_path))
    throw ConfigError("calibration file does not exist: " + cfg.calibration_path);
  if (!cfg.scene_path.empty() && !std::filesystem::exists(cfg.scene_path))
    throw ConfigError("scene file does not exist: " + cfg.scene_path);
  return cfg;
}

void write_resolved_config(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f.precision(17);
  f << "preset " << cfg.preset << "\n";
  if (!cfg.calibration_path.empty()) f << "calibration " << cfg.calibration_path << "\n";
  if (!cfg.scene_path.empty()) f << "scene " << cfg.scene_path << "\n";
  f << "pattern_kind " << cfg.patterns.kind << "\n";
  f << "pattern_scales " << join_int_list(cfg.patterns.scales) << "\n";
  f << "pattern_per_scale " << cfg.patterns.per_scale << "\n";
  f << "pattern_budget " << cfg.patterns.budget << "\n";
  f << "pattern_seed " << cfg.patterns.seed << "\n";
  f << "pattern_blur " << cfg.patterns.blur_sigma << "\n";
  f << "pattern_vertical_tiles " << cfg.patterns.vertical_tiles << "\n";
  f << "gray_bits " << cfg.patterns.gray_bits << "\n";
  f << "gray_inverse " << (cfg.patterns.gray_inverse ? 1 : 0) << "\n";
  f << "phase_wavelength " << cfg.patterns.phase_wavelength << "\n";
  f << "noise_sigma " << cfg.noise_sigma << "\n";
  f << "z_near " << cfg.train.z_near << "\n";
  f << "z_far " << cfg.train.z_far << "\n";
  f << "batch_rays " << cfg.train.batch_rays << "\n";
  f << "iterations " << cfg.train.iterations << "\n";
  f << "phase1_iterations " << cfg.train.phase1_iterations << "\n";
  f << "k_coarse " << cfg.train.k_coarse << "\n";
  f << "k_fine " << cfg.train.k_fine << "\n";
  f << "learning_rate " << cfg.train.adam.learning_rate << "\n";
  f << "adam_beta1 " << cfg.train.adam.beta1 << "\n";
  f << "adam_beta2 " << cfg.train.adam.beta2 << "\n";
  f << "adam_epsilon " << cfg.train.adam.epsilon << "\n";
  f << "lambda_sc " << cfg.train.loss.lambda_sc << "\n";
  f << "lambda_reg " << cfg.train.loss.lambda_reg << "\n";
  f << "use_rendered_loss " << (cfg.train.loss.use_rendered ? 1 : 0) << "\n";
  f << "b_floor " << cfg.train.b_floor << "\n";
  f << "s_lr_scale " << cfg.train.s_lr_scale << "\n";
  f << "weight_mode " << weight_mode_name(cfg.train.weight_mode) << "\n";
  f << "train_seed " << cfg.train.seed << "\n";
  f << "chunk_rays " << cfg.train.chunk_rays << "\n";
  f << "workers " << cfg.train.workers << "\n";
  f << "net_hidden_layers " << cfg.net.hidden_layers << "\n";
  f << "net_width " << cfg.net.width << "\n";
  f << "net_skip_layer " << cfg.net.skip_layer << "\n";
  f << "net_frequencies " << cfg.net.encoding.num_frequencies << "\n";
  f << "init_radius " << cfg.init_radius << "\n";
}

PatternSet build_budget_multiscale(const PatternSpec& spec, int width, int height, int budget) {
  if (budget < 1) throw ConfigError("pattern budget must be >= 1");
  PatternSet set;
  set.rng_seed = spec.seed;
  const int nscales = static_cast<int>(spec.scales.size());
  for (int j = 0; j < budget; ++j) {
    const int si = j % nscales;
    set.patterns.push_back(gen_random_pattern(width, height, spec.scales[static_cast<size_t>(si)],
                                              si, j / nscales, spec.seed, spec.vertical_tiles));
  }
  if (spec.blur_sigma > 0) set = blur(set, spec.blur_sigma);
  set.blur_sigma = spec.blur_sigma;
  for (Pattern& p : set.patterns) quantize16(p.grid);
  return set;
}

PatternSet build_patterns(const PatternSpec& spec, int width, int height) {
  PatternSet set;
  if (spec.kind == "random-multiscale") {
    if (spec.budget > 0) return build_budget_multiscale(spec, width, height, spec.budget);
    set = gen_random_multiscale(width, height, spec.scales, spec.per_scale, spec.seed,
                                spec.vertical_tiles);
  } else if (spec.kind == "gray-code") {
    set = gen_gray_code(width, height, spec.gray_bits, spec.gray_inverse);
  } else if (spec.kind == "phase-gt") {
    // gray code with inverses whose fringe width equals the phase wavelength,
    // followed by the 4-step sinusoid set
    int total_bits = 0;
    while ((1 << total_bits) < width) ++total_bits;
    const double lg = std::log2(spec.phase_wavelength);
    const int shift = static_cast<int>(std::lround(lg));
    if (std::abs(lg - shift) > 1e-9)
      throw ConfigError("phase-gt: wavelength must be a power of two");
    set = gen_gray_code(width, height, total_bits - shift, true);
    PatternSet phase = gen_phase_shift(width, height, spec.phase_wavelength, 4);
    for (Pattern& p : phase.patterns) set.patterns.push_back(std::move(p));
  } else {
    throw ConfigError("unknown pattern kind: " + spec.kind);
  }
  set.rng_seed = spec.seed;
  if (spec.blur_sigma > 0) set = blur(set, spec.blur_sigma);
  set.blur_sigma = spec.blur_sigma;
  for (Pattern& p : set.patterns) quantize16(p.grid);
  return set;
}

}  // namespace slsdf
