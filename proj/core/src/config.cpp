#include "xdistill/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "xdistill/networks.hpp"
#include "xdistill/semantics.hpp"

namespace xd {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(value, &pos);
    check(pos == value.size(), "");
    return v;
  } catch (...) {
    fail("config: key '" + key + "' expects an integer, got '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    check(pos == value.size(), "");
    return v;
  } catch (...) {
    fail("config: key '" + key + "' expects a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail("config: key '" + key + "' expects true/false, got '" + value + "'");
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

LossConfig TrainConfig::loss() const {
  LossConfig c;
  c.alpha = alpha;
  c.lambda_sm_base = lambda_smooth;
  c.n_scales = n_scales;
  c.lambda_d2s_final = lambda_d2s;
  c.schedule =
      schedule == "constant" ? LossConfig::Schedule::kConstant : LossConfig::Schedule::kLinear;
  c.total_steps = total_steps;
  return c;
}

SceneParams TrainConfig::scene() const {
  SceneParams p;
  p.H = height;
  p.W = width;
  p.n_boxes = n_boxes;
  p.n_poles = n_poles;
  p.texture_freq = texture_freq;
  p.t_forward_min = t_forward_min;
  p.t_forward_max = t_forward_max;
  p.yaw_max_deg = yaw_max_deg;
  p.ground_height = ground_height;
  p.far_plane = far_plane;
  return p;
}

void TrainConfig::validate() const {
  check(lr > 0, "config: lr must be positive");
  check(total_steps >= 1, "config: total_steps must be >= 1");
  check(batch_size >= 1, "config: batch_size must be >= 1");
  check(alpha >= 0 && alpha <= 1, "config: alpha must be in [0,1]");
  check(lambda_smooth >= 0, "config: lambda_smooth must be >= 0");
  check(n_scales >= 1 && n_scales <= 4, "config: n_scales must be in [1,4]");
  check(lambda_d2s >= 0, "config: lambda_d2s must be >= 0");
  check(schedule == "linear" || schedule == "constant",
        "config: schedule must be linear or constant");
  check(d2s_input == "disparity" || d2s_input == "depth",
        "config: d2s_input must be disparity or depth");
  check(teacher_noise >= 0 && teacher_noise < 1, "config: teacher_noise must be in [0,1)");
  check(min_depth > 0 && min_depth < max_depth, "config: need 0 < min_depth < max_depth");
  check(n_samples >= 1 && n_eval_samples >= 1, "config: sample counts must be >= 1");
  check(checkpoint_interval >= 1, "config: checkpoint_interval must be >= 1");
  semantics::make_grouping_scheme(grouping);  // rejects unknown names
  parse_d2s_kind(d2s_variant);
  parse_backbone(backbone);
}

void TrainConfig::apply(const std::string& key, const std::string& value) {
  if (key == "lr") lr = real(parse_real(key, value));
  else if (key == "total_steps") total_steps = int(parse_int(key, value));
  else if (key == "batch_size") batch_size = int(parse_int(key, value));
  else if (key == "seed") seed = uint64_t(parse_int(key, value));
  else if (key == "alpha") alpha = real(parse_real(key, value));
  else if (key == "lambda_smooth") lambda_smooth = real(parse_real(key, value));
  else if (key == "n_scales") n_scales = int(parse_int(key, value));
  else if (key == "use_min_reprojection") use_min_reprojection = parse_bool(key, value);
  else if (key == "use_automask") use_automask = parse_bool(key, value);
  else if (key == "distill_enabled") distill_enabled = parse_bool(key, value);
  else if (key == "lambda_d2s") lambda_d2s = real(parse_real(key, value));
  else if (key == "schedule") schedule = value;
  else if (key == "grouping") grouping = value;
  else if (key == "d2s_variant") d2s_variant = value;
  else if (key == "d2s_input") d2s_input = value;
  else if (key == "teacher_noise") teacher_noise = real(parse_real(key, value));
  else if (key == "min_depth") min_depth = real(parse_real(key, value));
  else if (key == "max_depth") max_depth = real(parse_real(key, value));
  else if (key == "backbone") backbone = value;
  else if (key == "height") height = int(parse_int(key, value));
  else if (key == "width") width = int(parse_int(key, value));
  else if (key == "n_boxes") n_boxes = int(parse_int(key, value));
  else if (key == "n_poles") n_poles = int(parse_int(key, value));
  else if (key == "texture_freq") texture_freq = real(parse_real(key, value));
  else if (key == "t_forward_min") t_forward_min = parse_real(key, value);
  else if (key == "t_forward_max") t_forward_max = parse_real(key, value);
  else if (key == "yaw_max_deg") yaw_max_deg = parse_real(key, value);
  else if (key == "ground_height") ground_height = parse_real(key, value);
  else if (key == "far_plane") far_plane = parse_real(key, value);
  else if (key == "n_samples") n_samples = int(parse_int(key, value));
  else if (key == "n_eval_samples") n_eval_samples = int(parse_int(key, value));
  else if (key == "shuffle") shuffle = parse_bool(key, value);
  else if (key == "dataset_dir") dataset_dir = value;
  else if (key == "out_dir") out_dir = value;
  else if (key == "checkpoint_interval") checkpoint_interval = int(parse_int(key, value));
  else fail("config: unknown key '" + key + "'");
}

std::string TrainConfig::dump() const {
  std::ostringstream os;
  os << "lr = " << fmt_real(double(lr)) << "\n";
  os << "total_steps = " << total_steps << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "seed = " << seed << "\n";
  os << "alpha = " << fmt_real(double(alpha)) << "\n";
  os << "lambda_smooth = " << fmt_real(double(lambda_smooth)) << "\n";
  os << "n_scales = " << n_scales << "\n";
  os << "use_min_reprojection = " << (use_min_reprojection ? "true" : "false") << "\n";
  os << "use_automask = " << (use_automask ? "true" : "false") << "\n";
  os << "distill_enabled = " << (distill_enabled ? "true" : "false") << "\n";
  os << "lambda_d2s = " << fmt_real(double(lambda_d2s)) << "\n";
  os << "schedule = " << schedule << "\n";
  os << "grouping = " << grouping << "\n";
  os << "d2s_variant = " << d2s_variant << "\n";
  os << "d2s_input = " << d2s_input << "\n";
  os << "teacher_noise = " << fmt_real(double(teacher_noise)) << "\n";
  os << "min_depth = " << fmt_real(double(min_depth)) << "\n";
  os << "max_depth = " << fmt_real(double(max_depth)) << "\n";
  os << "backbone = " << backbone << "\n";
  os << "height = " << height << "\n";
  os << "width = " << width << "\n";
  os << "n_boxes = " << n_boxes << "\n";
  os << "n_poles = " << n_poles << "\n";
  os << "texture_freq = " << fmt_real(double(texture_freq)) << "\n";
  os << "t_forward_min = " << fmt_real(t_forward_min) << "\n";
  os << "t_forward_max = " << fmt_real(t_forward_max) << "\n";
  os << "yaw_max_deg = " << fmt_real(yaw_max_deg) << "\n";
  os << "ground_height = " << fmt_real(ground_height) << "\n";
  os << "far_plane = " << fmt_real(far_plane) << "\n";
  os << "n_samples = " << n_samples << "\n";
  os << "n_eval_samples = " << n_eval_samples << "\n";
  os << "shuffle = " << (shuffle ? "true" : "false") << "\n";
  os << "dataset_dir = " << dataset_dir << "\n";
  os << "out_dir = " << out_dir << "\n";
  os << "checkpoint_interval = " << checkpoint_interval << "\n";
  return os.str();
}

namespace config {

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    check(eq != std::string::npos,
          "config: line " + std::to_string(lineno) + " is not `key = value`: '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    check(!key.empty(), "config: empty key on line " + std::to_string(lineno));
    pairs.emplace_back(key, value);
  }
  return pairs;
}

TrainConfig load_config(const std::string& path) {
  TrainConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  for (const auto& [key, value] : parse_config_text(buf.str())) cfg.apply(key, value);
  return cfg;
}

uint64_t config_hash(const TrainConfig& cfg) {
  TrainConfig canon = cfg;
  canon.seed = 0;
  canon.out_dir.clear();
  const std::string text = canon.dump();
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (const char c : text) {
    h ^= uint64_t(uint8_t(c));
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string run_name(const TrainConfig& cfg) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "run_%016" PRIx64 "_s%" PRIu64, config_hash(cfg),
                uint64_t(cfg.seed));
  return buf;
}

}  // namespace config
}  // namespace xd
