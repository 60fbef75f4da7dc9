#include "kbprobe/config.hpp"

#include <fstream>
#include <sstream>

#include "kbprobe/errors.hpp"
#include "kbprobe/util.hpp"

namespace kbprobe {

namespace {

const std::vector<std::string> k_presets = {
    "P2_Sequential",      "P3_Reflection",      "P4_Taxonomy_L2W2",
    "P4_Taxonomy_L3W3",   "P4_Taxonomy_L5W5",   "P5_MultiProfile_N3",
    "P5_MultiProfile_N10", "P5_MultiProfile_N20"};

std::vector<std::string> parse_list(const std::string& value) {
  std::vector<std::string> out;
  for (const auto& part : split(value, ';')) {
    std::string item = trim(part);
    if (!item.empty()) out.push_back(std::move(item));
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "' needs a number, got '" +
                       value + "'");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "' needs an integer, got '" +
                       value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error("config key '" + key +
                       "' needs a nonnegative integer, got '" + value + "'");
  }
}

void apply_key(experiment_config& cfg, const std::string& section,
               const std::string& key, const std::string& value) {
  if (section == "run") {
    if (key == "topics") cfg.topics = parse_list(value);
    else if (key == "models") cfg.models = parse_list(value);
    else if (key == "pipelines") cfg.pipelines = parse_list(value);
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "output") cfg.output_dir = value;
    else if (key == "temperature")
      cfg.extract_temperature = parse_double(key, value);
    else if (key == "judge_temperature")
      cfg.judge_temperature = parse_double(key, value);
    else if (key == "max_output_tokens")
      cfg.max_output_tokens = static_cast<int>(parse_int(key, value));
    else
      throw config_error("unknown config key '" + key + "' in [run]");
    return;
  }
  if (section == "gateway") {
    if (key == "concurrency")
      cfg.concurrency = static_cast<int>(parse_int(key, value));
    else if (key == "retry_attempts")
      cfg.retry.max_attempts = static_cast<int>(parse_int(key, value));
    else if (key == "retry_backoff")
      cfg.retry.backoff_base_seconds = parse_double(key, value);
    else if (key == "retry_multiplier")
      cfg.retry.backoff_multiplier = parse_double(key, value);
    else if (key == "embed_batch_limit")
      cfg.embed_batch_limit = static_cast<int>(parse_int(key, value));
    else if (key == "api_base")
      cfg.api_base = value;
    else if (key == "timeout")
      cfg.http_timeout_seconds = parse_double(key, value);
    else if (key == "embedding_model")
      cfg.embedding_model = value;
    else
      throw config_error("unknown config key '" + key + "' in [gateway]");
    return;
  }
  if (section == "dedup") {
    if (key == "strict_threshold")
      cfg.strict_threshold = parse_double(key, value);
    else if (key == "fuzzy_low")
      cfg.fuzzy_low = parse_double(key, value);
    else if (key == "judge_model")
      cfg.judge_model = value;
    else if (key == "audit_model")
      cfg.audit_model = value;
    else
      throw config_error("unknown config key '" + key + "' in [dedup]");
    return;
  }
  if (section == "saturation") {
    if (key == "min_growth")
      cfg.saturation.min_growth = parse_double(key, value);
    else if (key == "min_efficiency")
      cfg.saturation.min_efficiency = parse_double(key, value);
    else if (key == "min_novel")
      cfg.saturation.min_novel = parse_int(key, value);
    else if (key == "max_turns")
      cfg.saturation.max_turns = static_cast<int>(parse_int(key, value));
    else
      throw config_error("unknown config key '" + key + "' in [saturation]");
    return;
  }
  if (section == "sim") {
    if (key == "seed") cfg.sim.seed = parse_u64(key, value);
    else if (key == "branching")
      cfg.sim.branching = static_cast<int>(parse_int(key, value));
    else if (key == "depth")
      cfg.sim.depth = static_cast<int>(parse_int(key, value));
    else if (key == "facts_per_leaf")
      cfg.sim.facts_per_leaf = static_cast<int>(parse_int(key, value));
    else if (key == "zipf_s")
      cfg.sim.zipf_s = parse_double(key, value);
    else if (key == "paraphrases_per_fact")
      cfg.sim.paraphrases_per_fact = static_cast<int>(parse_int(key, value));
    else
      throw config_error("unknown config key '" + key + "' in [sim]");
    return;
  }
  if (section == "prompts") {
    // key is a template key, value a file path; both checked on load
    cfg.prompt_overrides[key] = value;
    return;
  }
  throw config_error("unknown config section [" + section + "]");
}

}  // namespace

void experiment_config::validate() const {
  if (topics.empty()) throw config_error("config needs at least one topic");
  if (models.empty()) throw config_error("config needs at least one model");
  if (pipelines.empty())
    throw config_error("config needs at least one pipeline preset");
  for (const auto& name : pipelines) resolve_preset(name, saturation);
  if (concurrency < 1 || concurrency > 64)
    throw config_error("gateway concurrency must be in 1..64, got " +
                       std::to_string(concurrency));
  if (retry.max_attempts < 1)
    throw config_error("retry_attempts must be >= 1");
  if (retry.backoff_base_seconds < 0 || retry.backoff_multiplier < 1)
    throw config_error("retry backoff settings out of range");
  if (embed_batch_limit < 1)
    throw config_error("embed_batch_limit must be >= 1");
  if (extract_temperature < 0 || judge_temperature < 0)
    throw config_error("temperatures must be >= 0");
  if (max_output_tokens < 1)
    throw config_error("max_output_tokens must be >= 1");
  if (http_timeout_seconds <= 0)
    throw config_error("gateway timeout must be positive");
  make_dedup_config().validate();
  saturation.validate();
  sim.validate();
  for (const auto& [key, path] : prompt_overrides) {
    prompt_registry::defaults().raw(key);  // unknown keys raise config_error
    if (path.empty())
      throw config_error("prompt override for '" + key + "' has no path");
  }
}

dedup_config experiment_config::make_dedup_config() const {
  dedup_config d;
  d.strict_threshold = strict_threshold;
  d.fuzzy_low = fuzzy_low;
  d.judge_model_id = judge_model;
  d.audit_model_id = audit_model;
  return d;
}

gateway_options experiment_config::make_gateway_options() const {
  gateway_options opt;
  opt.concurrency = concurrency;
  opt.retry = retry;
  opt.embed_batch_limit = embed_batch_limit;
  return opt;
}

const std::vector<std::string>& preset_names() { return k_presets; }

policy_config resolve_preset(const std::string& name,
                             const saturation_config& saturation) {
  policy_config c;
  c.saturation = saturation;
  if (name == "P2_Sequential") {
    c.policy_id = "sequential";
  } else if (name == "P3_Reflection") {
    c.policy_id = "reflective";
  } else if (name == "P4_Taxonomy_L2W2") {
    c.policy_id = "taxonomy";
    c.branching = 2;
    c.max_depth = 2;
  } else if (name == "P4_Taxonomy_L3W3") {
    c.policy_id = "taxonomy";
    c.branching = 3;
    c.max_depth = 2;
  } else if (name == "P4_Taxonomy_L5W5") {
    c.policy_id = "taxonomy";
    c.branching = 5;
    c.max_depth = 2;
  } else if (name == "P5_MultiProfile_N3") {
    c.policy_id = "multi_perspective";
    c.profile_count = 3;
  } else if (name == "P5_MultiProfile_N10") {
    c.policy_id = "multi_perspective";
    c.profile_count = 10;
  } else if (name == "P5_MultiProfile_N20") {
    c.policy_id = "multi_perspective";
    c.profile_count = 20;
  } else {
    std::string valid;
    for (const auto& p : k_presets) {
      if (!valid.empty()) valid += ", ";
      valid += p;
    }
    throw config_error("unknown pipeline preset '" + name +
                       "' (valid presets: " + valid + ")");
  }
  c.validate();
  return c;
}

experiment_config parse_config_text(const std::string& text) {
  experiment_config cfg;
  std::string section;
  int line_no = 0;
  for (const auto& raw_line : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw_line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw config_error("config line " + std::to_string(line_no) +
                           ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw config_error("config line " + std::to_string(line_no) +
                           ": empty section name");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(line_no) +
                         ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw config_error("config line " + std::to_string(line_no) +
                         ": empty key");
    if (section.empty())
      throw config_error("config line " + std::to_string(line_no) +
                         ": key '" + key + "' outside any section");
    apply_key(cfg, section, key, value);
  }
  return cfg;
}

experiment_config load_config_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw config_error("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

prompt_registry load_prompts(const experiment_config& config) {
  prompt_registry registry = prompt_registry::defaults();
  for (const auto& [key, path] : config.prompt_overrides) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
      throw config_error("cannot open prompt override for '" + key + "': " +
                         path);
    std::ostringstream buf;
    buf << f.rdbuf();
    registry.set(key, buf.str());
  }
  return registry;
}

}  // namespace kbprobe
