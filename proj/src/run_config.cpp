#include "cseg/run_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace cseg {

TwoStageConfig RunConfig::two_stage() const {
  TwoStageConfig t;
  t.cascade = cascade;
  t.stage2_mode = tiler.overlap;
  t.restrict_stage1_to_body = tiler.restrict_stage1_to_body;
  return t;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Parser {
  int line = 0;
  std::string key;

  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("parse_run_config: line " + std::to_string(line) + ": " + key + ": " + why);
  }

  template <class T>
  T number(const std::string& v) const {
    std::istringstream is(v);
    T out{};
    if (!(is >> out) || !(is >> std::ws).eof()) fail("expected a number, got '" + v + "'");
    return out;
  }

  bool boolean(const std::string& v) const {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail("expected true or false, got '" + v + "'");
  }

  Dims3 triple(const std::string& v) const {
    std::istringstream is(v);
    Dims3 d{};
    if (!(is >> d[0] >> d[1] >> d[2]) || !(is >> std::ws).eof()) fail("expected three integers, got '" + v + "'");
    return d;
  }
};

using Setter = std::function<void(RunConfig&, const Parser&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& table() {
  static const std::map<std::string, std::map<std::string, Setter>> t = {
      {"network",
       {{"levels", [](RunConfig& c, const Parser& p, const std::string& v) { c.network.levels = p.number<int>(v); }},
        {"base_channels",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.network.base_channels = p.number<int>(v); }},
        {"num_classes",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.network.num_classes = p.number<int>(v); }},
        {"in_channels",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.network.in_channels = p.number<int>(v); }},
        {"input_tile",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.network.input_tile = p.triple(v); }}}},
      {"train",
       {{"learning_rate",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.train.learning_rate = p.number<double>(v); }},
        {"momentum", [](RunConfig& c, const Parser& p, const std::string& v) { c.train.momentum = p.number<double>(v); }},
        {"iterations", [](RunConfig& c, const Parser& p, const std::string& v) { c.train.iterations = p.number<long>(v); }},
        {"validation_interval",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.train.validation_interval = p.number<long>(v); }},
        {"batch_size", [](RunConfig& c, const Parser& p, const std::string& v) { c.train.batch_size = p.number<int>(v); }},
        {"seed",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.train.seed = p.number<std::uint64_t>(v); }},
        {"stage", [](RunConfig& c, const Parser& p, const std::string& v) { c.train.stage = p.number<int>(v); }},
        {"lr_step", [](RunConfig& c, const Parser& p, const std::string& v) { c.train.lr_step = p.number<long>(v); }},
        {"lr_gamma", [](RunConfig& c, const Parser& p, const std::string& v) { c.train.lr_gamma = p.number<double>(v); }},
        {"class_weighting",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.train.class_weighting = p.boolean(v); }},
        {"validation_first_class",
         [](RunConfig& c, const Parser& p, const std::string& v) {
           c.train.validation_first_class = static_cast<Label>(p.number<int>(v));
         }}}},
      {"augment",
       {{"enabled", [](RunConfig& c, const Parser& p, const std::string& v) { c.augment.enabled = p.boolean(v); }},
        {"law",
         [](RunConfig& c, const Parser& p, const std::string& v) {
           if (v == "uniform") c.augment.law = DisplacementLaw::Uniform;
           else if (v == "normal") c.augment.law = DisplacementLaw::Normal;
           else p.fail("expected uniform or normal, got '" + v + "'");
         }},
        {"max_disp", [](RunConfig& c, const Parser& p, const std::string& v) { c.augment.max_disp = p.number<double>(v); }},
        {"grid_spacing",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.augment.grid_spacing = p.number<int>(v); }},
        {"rotation_deg",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.augment.rotation_deg = p.number<double>(v); }},
        {"translation",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.augment.translation = p.number<double>(v); }}}},
      {"cascade",
       {{"body_threshold",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.cascade.body_threshold = p.number<float>(v); }},
        {"dilation_radius",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.cascade.dilation_radius = p.number<int>(v); }},
        {"stage", [](RunConfig& c, const Parser& p, const std::string& v) { c.cascade.stage = p.number<int>(v); }},
        {"min_foreground_label",
         [](RunConfig& c, const Parser& p, const std::string& v) {
           c.cascade.min_foreground_label = static_cast<Label>(p.number<int>(v));
         }},
        {"region_from_ground_truth",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.cascade.region_from_ground_truth = p.boolean(v); }},
        {"window_low", [](RunConfig& c, const Parser& p, const std::string& v) { c.cascade.window_low = p.number<float>(v); }},
        {"window_high",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.cascade.window_high = p.number<float>(v); }}}},
      {"tiler",
       {{"overlap",
         [](RunConfig& c, const Parser& p, const std::string& v) {
           try {
             c.tiler.overlap = parse_overlap_mode(v);
           } catch (const InvalidMode&) {
             p.fail("expected none or xy_half, got '" + v + "'");
           }
         }},
        {"restrict_stage1_to_body",
         [](RunConfig& c, const Parser& p, const std::string& v) { c.tiler.restrict_stage1_to_body = p.boolean(v); }}}},
  };
  return t;
}

void validate(const RunConfig& c) {
  auto bad = [](const std::string& why) { throw ConfigError("parse_run_config: " + why); };
  if (c.network.levels < 1) bad("network.levels must be >= 1");
  if (c.network.base_channels < 1) bad("network.base_channels must be >= 1");
  if (c.network.num_classes < 2) bad("network.num_classes must be >= 2");
  if (c.network.in_channels != 1) bad("network.in_channels must be 1");
  if (c.train.learning_rate < 0) bad("train.learning_rate must be >= 0");
  if (c.train.momentum < 0 || c.train.momentum >= 1) bad("train.momentum must lie in [0, 1)");
  if (c.train.iterations < 0) bad("train.iterations must be >= 0");
  if (c.train.batch_size < 1) bad("train.batch_size must be >= 1");
  if (c.augment.max_disp < 0 || c.augment.rotation_deg < 0 || c.augment.translation < 0)
    bad("augment ranges must be nonnegative");
  if (c.augment.grid_spacing < 1) bad("augment.grid_spacing must be >= 1");
  if (c.cascade.dilation_radius < 0) bad("cascade.dilation_radius must be >= 0");
  if (!(c.cascade.window_high > c.cascade.window_low)) bad("cascade window must be nonempty");
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string raw, section;
  Parser p;
  while (std::getline(is, raw)) {
    ++p.line;
    p.key.clear();
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') p.fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!table().count(section)) {
        p.key = "[" + section + "]";
        p.fail("unknown section");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) p.fail("expected key = value");
    p.key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) p.fail("key outside a section");
    const auto& keys = table().at(section);
    const auto it = keys.find(p.key);
    if (it == keys.end()) p.fail("unknown key in [" + section + "]");
    if (value.empty()) p.fail("missing value");
    it->second(cfg, p, value);
  }
  validate(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("load_run_config: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

std::string format_run_config(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  auto b = [](bool v) { return v ? "true" : "false"; };
  const auto& t = c.network.input_tile;
  os << "[network]\n"
     << "levels = " << c.network.levels << "\nbase_channels = " << c.network.base_channels
     << "\nnum_classes = " << c.network.num_classes << "\nin_channels = " << c.network.in_channels
     << "\ninput_tile = " << t[0] << ' ' << t[1] << ' ' << t[2] << "\n\n";
  os << "[train]\n"
     << "learning_rate = " << c.train.learning_rate << "\nmomentum = " << c.train.momentum
     << "\niterations = " << c.train.iterations << "\nvalidation_interval = " << c.train.validation_interval
     << "\nbatch_size = " << c.train.batch_size << "\nseed = " << c.train.seed << "\nstage = " << c.train.stage
     << "\nlr_step = " << c.train.lr_step << "\nlr_gamma = " << c.train.lr_gamma
     << "\nclass_weighting = " << b(c.train.class_weighting)
     << "\nvalidation_first_class = " << int(c.train.validation_first_class) << "\n\n";
  os << "[augment]\n"
     << "enabled = " << b(c.augment.enabled)
     << "\nlaw = " << (c.augment.law == DisplacementLaw::Uniform ? "uniform" : "normal")
     << "\nmax_disp = " << c.augment.max_disp << "\ngrid_spacing = " << c.augment.grid_spacing
     << "\nrotation_deg = " << c.augment.rotation_deg << "\ntranslation = " << c.augment.translation << "\n\n";
  os << "[cascade]\n"
     << "body_threshold = " << c.cascade.body_threshold << "\ndilation_radius = " << c.cascade.dilation_radius
     << "\nstage = " << c.cascade.stage << "\nmin_foreground_label = " << int(c.cascade.min_foreground_label)
     << "\nregion_from_ground_truth = " << b(c.cascade.region_from_ground_truth)
     << "\nwindow_low = " << c.cascade.window_low << "\nwindow_high = " << c.cascade.window_high << "\n\n";
  os << "[tiler]\n"
     << "overlap = " << to_string(c.tiler.overlap)
     << "\nrestrict_stage1_to_body = " << b(c.tiler.restrict_stage1_to_body) << '\n';
  return os.str();
}

}  // namespace cseg
