#include "scoreaug/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace scoreaug {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
}

struct KeyContext {
  const std::string& origin;
  int line;
  const std::string& value;

  double as_double() const {
    try {
      size_t pos = 0;
      const double v = std::stod(value, &pos);
      if (pos != value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      fail(origin, line, "expected a number, got '" + value + "'");
    }
  }
  long as_long() const {
    try {
      size_t pos = 0;
      const long v = std::stol(value, &pos);
      if (pos != value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      fail(origin, line, "expected an integer, got '" + value + "'");
    }
  }
  std::uint64_t as_u64() const {
    try {
      size_t pos = 0;
      const unsigned long long v = std::stoull(value, &pos);
      if (pos != value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      fail(origin, line, "expected an unsigned integer, got '" + value + "'");
    }
  }
  bool as_bool() const {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    fail(origin, line, "expected a boolean, got '" + value + "'");
  }
};

}  // namespace

void parse_condition_spec(const std::string& spec, SamplerConfig* sampler) {
  if (spec == "zeros") {
    sampler->condition_mode = ConditionMode::zeros;
    return;
  }
  if (spec == "identity") {
    sampler->condition_mode = ConditionMode::identity_onehot;
    return;
  }
  sampler->condition_mode = ConditionMode::params;
  AugmentationParams p;
  const auto colon = spec.find(':');
  const std::string kind = colon == std::string::npos ? spec : spec.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : spec.substr(colon + 1);
  p.kind = aug_kind_from_name(kind);
  const std::vector<std::string> parts = args.empty() ? std::vector<std::string>{} : split(args, ',');
  switch (p.kind) {
    case AugKind::identity:
      break;
    case AugKind::brightness:
      if (parts.size() != 1) throw ConfigError("brightness condition needs one factor");
      p.brightness = std::stod(parts[0]);
      break;
    case AugKind::translation:
      if (parts.size() != 2) throw ConfigError("translation condition needs di,dj");
      p.shift_i = std::stoi(parts[0]);
      p.shift_j = std::stoi(parts[1]);
      break;
    case AugKind::cutout:
      if (parts.size() != 2) throw ConfigError("cutout condition needs h,w");
      p.cut_h = std::stoi(parts[0]);
      p.cut_w = std::stoi(parts[1]);
      break;
    case AugKind::rotation:
      if (parts.size() != 1) throw ConfigError("rotation condition needs the quarter-turn count");
      p.quarter_turns = std::stoi(parts[0]);
      break;
    case AugKind::smooth_nonlinear:
      if (parts.size() != 1) throw ConfigError("smooth_nonlinear condition needs the strength");
      p.nl_strength = std::stod(parts[0]);
      break;
  }
  sampler->condition_params = p;
}

std::string condition_spec_string(const SamplerConfig& sampler) {
  char buf[128];
  switch (sampler.condition_mode) {
    case ConditionMode::zeros:
      return "zeros";
    case ConditionMode::identity_onehot:
      return "identity";
    case ConditionMode::params: {
      const AugmentationParams& p = sampler.condition_params;
      switch (p.kind) {
        case AugKind::identity:
          return "identity_params";
        case AugKind::brightness:
          std::snprintf(buf, sizeof(buf), "brightness:%.17g", p.brightness);
          return buf;
        case AugKind::translation:
          std::snprintf(buf, sizeof(buf), "translation:%d,%d", p.shift_i, p.shift_j);
          return buf;
        case AugKind::cutout:
          std::snprintf(buf, sizeof(buf), "cutout:%d,%d", p.cut_h, p.cut_w);
          return buf;
        case AugKind::rotation:
          std::snprintf(buf, sizeof(buf), "rotation:%d", p.quarter_turns);
          return buf;
        case AugKind::smooth_nonlinear:
          std::snprintf(buf, sizeof(buf), "smooth_nonlinear:%.17g", p.nl_strength);
          return buf;
      }
      return "zeros";
    }
  }
  return "zeros";
}

namespace {

std::string condition_spec_for_params(const AugmentationParams& p) {
  SamplerConfig s;
  s.condition_mode = ConditionMode::params;
  s.condition_params = p;
  return condition_spec_string(s);
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  bool kinds_seen = false;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "dataset" && section != "schedule" && section != "augmentation" &&
          section != "model" && section != "train" && section != "sampler" &&
          section != "verify" && section != "output") {
        fail(origin, line_no, "unknown section [" + section + "]");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(origin, line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) fail(origin, line_no, "key outside of any section");
    const KeyContext kv{origin, line_no, value};

    if (section == "dataset") {
      if (key == "generator") cfg.generator = value;
      else if (key == "n") cfg.data_n = static_cast<int>(kv.as_long());
      else if (key == "seed") cfg.data_seed = kv.as_u64();
      else if (key == "file") cfg.data_file = value;
      else if (key == "heldout_n") cfg.heldout_n = static_cast<int>(kv.as_long());
      else if (key == "heldout_seed") cfg.heldout_seed = kv.as_u64();
      else if (key == "heldout_file") cfg.heldout_file = value;
      else if (key == "height") cfg.shape.height = static_cast<int>(kv.as_long());
      else if (key == "width") cfg.shape.width = static_cast<int>(kv.as_long());
      else if (key == "channels") cfg.shape.channels = static_cast<int>(kv.as_long());
      else fail(origin, line_no, "unknown key '" + key + "' in [dataset]");
    } else if (section == "schedule") {
      if (key == "formulation") {
        if (value == "ve") cfg.formulation = Formulation::ve;
        else if (value == "vp") cfg.formulation = Formulation::vp;
        else fail(origin, line_no, "formulation must be ve or vp");
      } else if (key == "sigma_data") cfg.sigma_data_override = kv.as_double();
      else if (key == "vp_beta_d") cfg.vp_beta_d = kv.as_double();
      else if (key == "vp_beta_min") cfg.vp_beta_min = kv.as_double();
      else fail(origin, line_no, "unknown key '" + key + "' in [schedule]");
    } else if (section == "augmentation") {
      if (key == "kinds") {
        cfg.train.aug.kinds.clear();
        kinds_seen = true;
        for (const std::string& name : split(value, ',')) {
          if (name.empty()) continue;
          try {
            cfg.train.aug.kinds.push_back(aug_kind_from_name(name));
          } catch (const std::invalid_argument& e) {
            fail(origin, line_no, e.what());
          }
        }
      } else if (key == "brightness_max") cfg.train.aug.brightness_max = kv.as_double();
      else if (key == "translate_ratio") cfg.train.aug.translate_ratio = kv.as_double();
      else if (key == "cutout_ratio") cfg.train.aug.cutout_ratio = kv.as_double();
      else if (key == "nonlinear_max") cfg.train.aug.nonlinear_max = kv.as_double();
      else fail(origin, line_no, "unknown key '" + key + "' in [augmentation]");
    } else if (section == "model") {
      if (key == "hidden") {
        cfg.train.net.hidden.clear();
        for (const std::string& w : split(value, ',')) {
          if (!w.empty()) cfg.train.net.hidden.push_back(std::stoi(w));
        }
        if (cfg.train.net.hidden.empty()) fail(origin, line_no, "hidden must list widths");
      } else if (key == "noise_embed_dim") cfg.train.net.noise_embed_dim = static_cast<int>(kv.as_long());
      else if (key == "dropout") cfg.train.net.dropout = kv.as_double();
      else fail(origin, line_no, "unknown key '" + key + "' in [model]");
    } else if (section == "train") {
      if (key == "variant") {
        try {
          cfg.train.variant = loss_variant_from_name(value);
        } catch (const std::invalid_argument& e) {
          fail(origin, line_no, e.what());
        }
      } else if (key == "conditioning") cfg.train.conditioning = kv.as_bool();
      else if (key == "batch_size") cfg.train.batch_size = static_cast<int>(kv.as_long());
      else if (key == "steps") cfg.train.steps = static_cast<int>(kv.as_long());
      else if (key == "learning_rate") cfg.train.learning_rate = kv.as_double();
      else if (key == "ema_halflife") cfg.train.ema_halflife = kv.as_double();
      else if (key == "heldout_fraction") cfg.train.heldout_fraction = kv.as_double();
      else if (key == "seed") cfg.train.seed = kv.as_u64();
      else if (key == "eval_every") cfg.train.eval_every = static_cast<int>(kv.as_long());
      else if (key == "weight_decay") cfg.train.weight_decay = kv.as_double();
      else if (key == "eval_draws") cfg.train.eval_draws = static_cast<int>(kv.as_long());
      else if (key == "metric_samples") cfg.train.metric_samples = static_cast<int>(kv.as_long());
      else fail(origin, line_no, "unknown key '" + key + "' in [train]");
    } else if (section == "sampler") {
      if (key == "n_steps") cfg.train.sampler.n_steps = static_cast<int>(kv.as_long());
      else if (key == "sigma_max") cfg.train.sampler.sigma_max = kv.as_double();
      else if (key == "sigma_min") cfg.train.sampler.sigma_min = kv.as_double();
      else if (key == "rho") cfg.train.sampler.rho = kv.as_double();
      else if (key == "condition") {
        try {
          parse_condition_spec(value, &cfg.train.sampler);
        } catch (const std::exception& e) {
          fail(origin, line_no, e.what());
        }
      } else if (key == "count") cfg.sample_count = static_cast<int>(kv.as_long());
      else fail(origin, line_no, "unknown key '" + key + "' in [sampler]");
    } else if (section == "verify") {
      if (key == "seed") cfg.verify_seed = kv.as_u64();
      else if (key == "n_mc") cfg.verify_n_mc = kv.as_long();
      else if (key == "linear_map") cfg.verify_linear_map = value;
      else fail(origin, line_no, "unknown key '" + key + "' in [verify]");
    } else if (section == "output") {
      if (key == "dir") cfg.output_dir = value;
      else fail(origin, line_no, "unknown key '" + key + "' in [output]");
    }
  }

  if (kinds_seen) {
    // identity is always part of the sampling support
    bool has_identity = false;
    for (AugKind k : cfg.train.aug.kinds) has_identity |= k == AugKind::identity;
    if (!has_identity) {
      cfg.train.aug.kinds.insert(cfg.train.aug.kinds.begin(), AugKind::identity);
    }
  }
  if (!cfg.data_file.empty() && !std::filesystem::exists(cfg.data_file)) {
    throw ConfigError(origin + ": dataset file does not exist: " + cfg.data_file);
  }
  if (!cfg.heldout_file.empty() && !std::filesystem::exists(cfg.heldout_file)) {
    throw ConfigError(origin + ": heldout file does not exist: " + cfg.heldout_file);
  }
  return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  char buf[256];
  const auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };

  out << "[dataset]\n";
  out << "generator = " << cfg.generator << "\n";
  out << "n = " << cfg.data_n << "\n";
  out << "seed = " << cfg.data_seed << "\n";
  if (!cfg.data_file.empty()) out << "file = " << cfg.data_file << "\n";
  out << "heldout_n = " << cfg.heldout_n << "\n";
  out << "heldout_seed = " << cfg.heldout_seed << "\n";
  if (!cfg.heldout_file.empty()) out << "heldout_file = " << cfg.heldout_file << "\n";
  if (cfg.shape.dim() > 0) {
    out << "height = " << cfg.shape.height << "\n";
    out << "width = " << cfg.shape.width << "\n";
    out << "channels = " << cfg.shape.channels << "\n";
  }

  out << "\n[schedule]\n";
  out << "formulation = " << (cfg.formulation == Formulation::ve ? "ve" : "vp") << "\n";
  out << "sigma_data = " << num(cfg.sigma_data_override) << "\n";
  out << "vp_beta_d = " << num(cfg.vp_beta_d) << "\n";
  out << "vp_beta_min = " << num(cfg.vp_beta_min) << "\n";

  out << "\n[augmentation]\n";
  out << "kinds = ";
  for (size_t i = 0; i < cfg.train.aug.kinds.size(); ++i) {
    if (i) out << ", ";
    out << aug_kind_name(cfg.train.aug.kinds[i]);
  }
  out << "\n";
  out << "brightness_max = " << num(cfg.train.aug.brightness_max) << "\n";
  out << "translate_ratio = " << num(cfg.train.aug.translate_ratio) << "\n";
  out << "cutout_ratio = " << num(cfg.train.aug.cutout_ratio) << "\n";
  out << "nonlinear_max = " << num(cfg.train.aug.nonlinear_max) << "\n";

  out << "\n[model]\n";
  out << "hidden = ";
  for (size_t i = 0; i < cfg.train.net.hidden.size(); ++i) {
    if (i) out << ", ";
    out << cfg.train.net.hidden[i];
  }
  out << "\n";
  out << "noise_embed_dim = " << cfg.train.net.noise_embed_dim << "\n";
  out << "dropout = " << num(cfg.train.net.dropout) << "\n";

  out << "\n[train]\n";
  out << "variant = " << loss_variant_name(cfg.train.variant) << "\n";
  out << "conditioning = " << (cfg.train.conditioning ? "true" : "false") << "\n";
  out << "batch_size = " << cfg.train.batch_size << "\n";
  out << "steps = " << cfg.train.steps << "\n";
  out << "learning_rate = " << num(cfg.train.learning_rate) << "\n";
  out << "ema_halflife = " << num(cfg.train.ema_halflife) << "\n";
  out << "heldout_fraction = " << num(cfg.train.heldout_fraction) << "\n";
  out << "seed = " << cfg.train.seed << "\n";
  out << "eval_every = " << cfg.train.eval_every << "\n";
  out << "weight_decay = " << num(cfg.train.weight_decay) << "\n";
  out << "eval_draws = " << cfg.train.eval_draws << "\n";
  out << "metric_samples = " << cfg.train.metric_samples << "\n";

  out << "\n[sampler]\n";
  out << "n_steps = " << cfg.train.sampler.n_steps << "\n";
  out << "sigma_max = " << num(cfg.train.sampler.sigma_max) << "\n";
  out << "sigma_min = " << num(cfg.train.sampler.sigma_min) << "\n";
  out << "rho = " << num(cfg.train.sampler.rho) << "\n";
  out << "condition = " << condition_spec_string(cfg.train.sampler) << "\n";
  out << "count = " << cfg.sample_count << "\n";

  out << "\n[verify]\n";
  out << "seed = " << cfg.verify_seed << "\n";
  out << "n_mc = " << cfg.verify_n_mc << "\n";
  if (!cfg.verify_linear_map.empty()) out << "linear_map = " << cfg.verify_linear_map << "\n";

  out << "\n[output]\n";
  out << "dir = " << cfg.output_dir << "\n";
  return out.str();
}

EmpiricalDataset config_dataset(const RunConfig& cfg) {
  EmpiricalDataset ds;
  if (!cfg.data_file.empty()) {
    ImageShape shape = cfg.shape.dim() > 0 ? cfg.shape : ImageShape{1, 0, 1};
    ds = load_dataset(cfg.data_file, shape, cfg.sigma_data_override);
  } else {
    ds = generate_dataset(cfg.generator, cfg.data_n, cfg.data_seed);
    if (cfg.shape.dim() > 0) {
      if (cfg.shape.dim() != ds.dim()) {
        throw ConfigError("configured shape does not match generator dimension");
      }
      ds.shape = cfg.shape;
    }
    if (cfg.sigma_data_override > 0.0) ds.sigma_data = cfg.sigma_data_override;
  }
  return ds;
}

std::optional<EmpiricalDataset> config_heldout(const RunConfig& cfg) {
  if (!cfg.heldout_file.empty()) {
    ImageShape shape = cfg.shape.dim() > 0 ? cfg.shape : ImageShape{1, 0, 1};
    return load_dataset(cfg.heldout_file, shape, cfg.sigma_data_override);
  }
  if (cfg.heldout_n > 0 && cfg.data_file.empty()) {
    EmpiricalDataset ds = generate_dataset(cfg.generator, cfg.heldout_n, cfg.heldout_seed);
    if (cfg.shape.dim() > 0 && cfg.shape.dim() == ds.dim()) ds.shape = cfg.shape;
    return ds;
  }
  return std::nullopt;
}

DiffusionSchedule config_schedule(const RunConfig& cfg, const EmpiricalDataset& ds) {
  if (cfg.formulation == Formulation::ve) return make_ve_schedule(ds.sigma_data);
  return make_vp_schedule(ds.sigma_data, cfg.vp_beta_d, cfg.vp_beta_min);
}

}  // namespace scoreaug
