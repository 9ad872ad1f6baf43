#include "tcm/harness/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tcm/errors.hpp"

namespace tcm::harness {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

const std::map<std::string, std::string>& config_schema() {
  static const std::map<std::string, std::string> schema{
      {"model.embed_dim", "32"},
      {"model.word_dim", "16"},
      {"model.stride", "8"},
      {"model.toy_mode", "true"},
      {"model.text_layers", "1"},
      {"model.text_heads", "2"},
      {"model.pool_heads", "2"},
      {"model.context_length", "77"},
      {"model.seed", "0"},
      {"model.image_lr_factor", "0.1"},
      {"model.text_lr_factor", "0.0"},
      {"model.pretrained", ""},
      {"vg.depth", "3"},
      {"vg.heads", "4"},
      {"vg.width", "32"},
      {"vg.ffn_dim", "64"},
      {"vg.positional", "true"},
      {"head.hidden", "32"},
      {"prompt.predefined", "Text"},
      {"prompt.n", "4"},
      {"prompt.seed", "1"},
      {"tcm.pp", "true"},
      {"tcm.lp", "true"},
      {"tcm.lg", "true"},
      {"tcm.vg", "true"},
      {"loss.lambda", "1.0"},
      {"loss.tau_init", "0.07"},
      {"train.steps", "2000"},
      {"train.lr", "0.02"},
      {"train.momentum", "0.9"},
      {"train.weight_decay", "0.0"},
      {"train.batch", "1"},
      {"train.seed", "0"},
      {"train.log_every", "100"},
      {"data.train", "toy:domainA:20:7"},
      {"data.eval", ""},
      {"data.image_size", "64"},
      {"fewshot.ratios", "0.1,0.3,0.5,1.0"},
      {"fewshot.seed", "0"},
      {"post.bin_thresh", "0.3"},
      {"post.min_area", "10"},
      {"eval.iou_thresh", "0.5"},
      {"eval.ignore_criterion", "iou"},
      {"output.dir", "runs/default"},
      {"toy.count", "20"},
      {"toy.seed", "7"},
      {"toy.style", "domainA"},
  };
  return schema;
}

Config Config::load(const std::string& path) {
  if (!std::filesystem::exists(path)) throw NotFound("config file not found: " + path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

Config Config::parse(std::string_view text, const std::string& origin) {
  Config c;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ParseError(origin + ":" + std::to_string(line_no) + ": empty key");
    try {
      c.set(key, trim(std::string_view(line).substr(eq + 1)));
    } catch (const InvalidConfig& e) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!config_schema().count(key)) throw InvalidConfig("unknown config key '" + key + "'");
  entries_[key] = value;
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw InvalidConfig("override '" + assignment + "' is not of the form key=value");
  set(trim(std::string_view(assignment).substr(0, eq)),
      trim(std::string_view(assignment).substr(eq + 1)));
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw InvalidConfig("config key " + key + " expects a number, got '" + it->second + "'");
  }
}

long long Config::get_int(const std::string& key, long long fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  long long v = 0;
  const auto* b = it->second.data();
  const auto* e = b + it->second.size();
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e)
    throw InvalidConfig("config key " + key + " expects an integer, got '" + it->second + "'");
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw InvalidConfig("config key " + key + " expects a boolean, got '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  const std::string v = get(key, "");
  std::size_t pos = 0;
  while (pos <= v.size()) {
    const std::size_t comma = std::min(v.find(',', pos), v.size());
    std::string item = trim(std::string_view(v).substr(pos, comma - pos));
    if (!item.empty()) out.push_back(std::move(item));
    pos = comma + 1;
  }
  return out;
}

std::string Config::echo() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

namespace {

std::size_t positive(const Config& c, const std::string& key, long long fallback) {
  const long long v = c.get_int(key, fallback);
  if (v <= 0) throw InvalidConfig("config key " + key + " must be positive");
  return static_cast<std::size_t>(v);
}

std::size_t non_negative(const Config& c, const std::string& key, long long fallback) {
  const long long v = c.get_int(key, fallback);
  if (v < 0) throw InvalidConfig("config key " + key + " must be >= 0");
  return static_cast<std::size_t>(v);
}

}  // namespace

ExperimentConfig ExperimentConfig::from(const Config& cfg) {
  // Defaults come from the schema so a missing key and its documented
  // default behave identically.
  Config c;
  for (const auto& [k, v] : config_schema()) c.set(k, v);
  for (const auto& [k, v] : cfg.entries()) c.set(k, v);

  ExperimentConfig e;
  e.source = c;
  auto& enc = e.model.encoder;
  enc.embed_dim = positive(c, "model.embed_dim", 0);
  enc.word_dim = positive(c, "model.word_dim", 0);
  enc.stride = positive(c, "model.stride", 0);
  enc.toy_mode = c.get_bool("model.toy_mode", true);
  enc.text_layers = non_negative(c, "model.text_layers", 0);
  enc.text_heads = positive(c, "model.text_heads", 0);
  enc.pool_heads = positive(c, "model.pool_heads", 0);
  enc.context_length = positive(c, "model.context_length", 0);
  enc.seed = static_cast<std::uint64_t>(c.get_int("model.seed", 0));
  enc.image_lr_factor = c.get_double("model.image_lr_factor", 0);
  enc.text_lr_factor = c.get_double("model.text_lr_factor", 0);
  enc.validate();
  e.pretrained = c.get("model.pretrained", "");

  e.model.vg.depth = positive(c, "vg.depth", 0);
  e.model.vg.heads = positive(c, "vg.heads", 0);
  e.model.vg.width = positive(c, "vg.width", 0);
  e.model.vg.ffn_dim = positive(c, "vg.ffn_dim", 0);
  e.model.vg.positional = c.get_bool("vg.positional", true);
  if (e.model.vg.width % e.model.vg.heads != 0)
    throw InvalidConfig("vg.width must be divisible by vg.heads");
  e.model.head.hidden = positive(c, "head.hidden", 0);

  e.model.predefined = c.get("prompt.predefined", "Text");
  e.model.n = non_negative(c, "prompt.n", 0);
  e.model.prompt_seed = static_cast<std::uint64_t>(c.get_int("prompt.seed", 0));
  if (e.model.n + 1 > enc.context_length)
    throw InvalidConfig("prompt.n + 1 exceeds model.context_length");
  e.model.use_pp = c.get_bool("tcm.pp", true);
  e.model.use_lp = c.get_bool("tcm.lp", true);
  e.model.use_lg = c.get_bool("tcm.lg", true);
  e.model.use_vg = c.get_bool("tcm.vg", true);
  e.model.lambda = c.get_double("loss.lambda", 1);
  e.model.tau_init = c.get_double("loss.tau_init", 0.07);
  if (!(e.model.lambda >= 0.0)) throw InvalidConfig("loss.lambda must be >= 0");
  if (!(e.model.tau_init > 0.0)) throw InvalidConfig("loss.tau_init must be > 0");

  e.train.steps = non_negative(c, "train.steps", 0);
  e.train.lr = c.get_double("train.lr", 0);
  e.train.momentum = c.get_double("train.momentum", 0);
  e.train.weight_decay = c.get_double("train.weight_decay", 0);
  e.train.batch = positive(c, "train.batch", 0);
  e.train.seed = static_cast<std::uint64_t>(c.get_int("train.seed", 0));
  e.train.log_every = positive(c, "train.log_every", 0);
  if (!(e.train.lr >= 0.0)) throw InvalidConfig("train.lr must be >= 0");

  e.train_legs = c.get_list("data.train");
  e.eval_legs = c.get_list("data.eval");
  e.toy_image_size = positive(c, "data.image_size", 0);

  e.fewshot_ratios.clear();
  for (const auto& r : c.get_list("fewshot.ratios")) {
    char* end = nullptr;
    const double v = std::strtod(r.c_str(), &end);
    if (end != r.c_str() + r.size()) throw InvalidConfig("few-shot ratio '" + r + "' is not a number");
    if (!(v > 0.0 && v <= 1.0)) throw InvalidConfig("few-shot ratio " + r + " outside (0, 1]");
    e.fewshot_ratios.push_back(v);
  }
  e.fewshot_seed = static_cast<std::uint64_t>(c.get_int("fewshot.seed", 0));

  e.post.bin_thresh = c.get_double("post.bin_thresh", 0.3);
  e.post.min_area = c.get_double("post.min_area", 10);
  if (!(e.post.bin_thresh > 0.0 && e.post.bin_thresh < 1.0))
    throw InvalidConfig("post.bin_thresh must lie in (0, 1)");
  e.match.iou_thresh = c.get_double("eval.iou_thresh", 0.5);
  const std::string crit = c.get("eval.ignore_criterion", "iou");
  if (crit == "iou")
    e.match.ignore_criterion = IgnoreCriterion::Iou;
  else if (crit == "pred_area")
    e.match.ignore_criterion = IgnoreCriterion::PredArea;
  else
    throw InvalidConfig("eval.ignore_criterion must be 'iou' or 'pred_area'");

  e.output_dir = c.get("output.dir", "runs/default");
  e.toy_count = positive(c, "toy.count", 0);
  e.toy_seed = static_cast<std::uint64_t>(c.get_int("toy.seed", 0));
  e.toy_style = c.get("toy.style", "domainA");
  return e;
}

}  // namespace tcm::harness
