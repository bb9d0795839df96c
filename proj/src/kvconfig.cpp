#include "lfd/kvconfig.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "lfd/errors.hpp"

namespace lfd {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  if (trim(value).empty()) return items;
  std::size_t start = 0;
  while (true) {
    const auto comma = value.find(',', start);
    items.push_back(trim(std::string_view(value).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return items;
}

const std::string& lookup(const KeyValues& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* type) {
  throw ConfigError("config key '" + key + "': '" + value + "' is not " + type);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text, const char* type) {
  T out{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (text.empty() || ec != std::errc() || ptr != end) bad_value(key, text, type);
  return out;
}

std::string join(const auto& values) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << values[i];
  return out.str();
}

std::string number(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

void reject_unknown(const KeyValues& kv, const KeyValues& known, const char* what) {
  for (const auto& [key, value] : kv) {
    if (!known.contains(key)) throw ConfigError(std::string("unknown ") + what + " key '" + key + "'");
  }
}

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    const auto body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const auto where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const auto key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!kv.emplace(key, trim(std::string_view(body).substr(eq + 1))).second) {
      throw ConfigError(where + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_key_values(text.str(), path.string());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [key, value] : kv) out += key + " = " + value + "\n";
  return out;
}

void apply_overrides(KeyValues& kv, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto key = trim(std::string_view(o).substr(0, eq));
    if (eq == std::string::npos || key.empty()) {
      throw ConfigError("override '" + o + "' is not key=value");
    }
    kv[key] = trim(std::string_view(o).substr(eq + 1));
  }
}

std::int64_t get_int(const KeyValues& kv, const std::string& key) {
  return parse_number<std::int64_t>(key, lookup(kv, key), "an integer");
}

std::uint64_t get_uint(const KeyValues& kv, const std::string& key) {
  return parse_number<std::uint64_t>(key, lookup(kv, key), "a non-negative integer");
}

double get_double(const KeyValues& kv, const std::string& key) {
  return parse_number<double>(key, lookup(kv, key), "a number");
}

bool get_bool(const KeyValues& kv, const std::string& key) {
  const auto& v = lookup(kv, key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::int64_t> get_int_list(const KeyValues& kv, const std::string& key) {
  std::vector<std::int64_t> out;
  for (const auto& item : split_list(lookup(kv, key))) {
    out.push_back(parse_number<std::int64_t>(key, item, "an integer list"));
  }
  return out;
}

std::vector<double> get_double_list(const KeyValues& kv, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split_list(lookup(kv, key))) {
    out.push_back(parse_number<double>(key, item, "a number list"));
  }
  return out;
}

std::vector<std::string> get_string_list(const KeyValues& kv, const std::string& key) {
  return split_list(lookup(kv, key));
}

KeyValues to_key_values(const ArchConfig& c) {
  return {{"input_size", std::to_string(c.input_size)},
          {"in_channels", std::to_string(c.in_channels)},
          {"conv_kernels", join(c.conv_kernels)},
          {"conv_channels", join(c.conv_channels)},
          {"pool_position", std::to_string(c.pool_position)},
          {"pool_kernel", std::to_string(c.pool_kernel)},
          {"pool_stride", std::to_string(c.pool_stride)},
          {"num_seg_heads", std::to_string(c.num_seg_heads)},
          {"num_classes", std::to_string(c.num_classes)},
          {"override_constraints", c.override_constraints ? "true" : "false"}};
}

ArchConfig arch_config_from(const KeyValues& kv, ArchConfig c) {
  reject_unknown(kv, to_key_values(c), "architecture");
  auto has = [&](const char* key) { return kv.contains(key); };
  if (has("input_size")) c.input_size = get_int(kv, "input_size");
  if (has("in_channels")) c.in_channels = get_int(kv, "in_channels");
  if (has("conv_kernels")) c.conv_kernels = get_int_list(kv, "conv_kernels");
  if (has("conv_channels")) c.conv_channels = get_int_list(kv, "conv_channels");
  if (has("pool_position")) c.pool_position = get_int(kv, "pool_position");
  if (has("pool_kernel")) c.pool_kernel = get_int(kv, "pool_kernel");
  if (has("pool_stride")) c.pool_stride = get_int(kv, "pool_stride");
  if (has("num_seg_heads")) c.num_seg_heads = get_int(kv, "num_seg_heads");
  if (has("num_classes")) c.num_classes = get_int(kv, "num_classes");
  if (has("override_constraints")) c.override_constraints = get_bool(kv, "override_constraints");
  return c;
}

KeyValues to_key_values(const TrainConfig& c) {
  return {{"epochs", std::to_string(c.epochs)},
          {"batch_size", std::to_string(c.batch_size)},
          {"lr", number(c.adam.lr)},
          {"beta1", number(c.adam.beta1)},
          {"beta2", number(c.adam.beta2)},
          {"epsilon", number(c.adam.epsilon)},
          {"lambda_cls", number(c.weights.lambda_cls)},
          {"lambda_seg", join(c.weights.lambda_seg)},
          {"objectives", join(c.objectives)},
          {"seed", std::to_string(c.seed)},
          {"checkpoint_every", std::to_string(c.checkpoint_every)},
          {"patience", std::to_string(c.patience)},
          {"stop_at_val_accuracy", number(c.stop_at_val_accuracy)},
          {"random_crop", c.random_crop ? "true" : "false"}};
}

TrainConfig train_config_from(const KeyValues& kv, TrainConfig c) {
  reject_unknown(kv, to_key_values(c), "training");
  auto has = [&](const char* key) { return kv.contains(key); };
  if (has("epochs")) c.epochs = get_int(kv, "epochs");
  if (has("batch_size")) c.batch_size = get_uint(kv, "batch_size");
  if (has("lr")) c.adam.lr = get_double(kv, "lr");
  if (has("beta1")) c.adam.beta1 = get_double(kv, "beta1");
  if (has("beta2")) c.adam.beta2 = get_double(kv, "beta2");
  if (has("epsilon")) c.adam.epsilon = get_double(kv, "epsilon");
  if (has("lambda_cls")) c.weights.lambda_cls = get_double(kv, "lambda_cls");
  if (has("lambda_seg")) c.weights.lambda_seg = get_double_list(kv, "lambda_seg");
  if (has("objectives")) c.objectives = get_string_list(kv, "objectives");
  if (has("seed")) c.seed = get_uint(kv, "seed");
  if (has("checkpoint_every")) c.checkpoint_every = get_int(kv, "checkpoint_every");
  if (has("patience")) c.patience = get_int(kv, "patience");
  if (has("stop_at_val_accuracy")) c.stop_at_val_accuracy = get_double(kv, "stop_at_val_accuracy");
  if (has("random_crop")) c.random_crop = get_bool(kv, "random_crop");
  if (c.batch_size == 0) throw ConfigError("config key 'batch_size' must be positive");
  if (c.epochs < 1) throw ConfigError("config key 'epochs' must be >= 1");
  validate_weights(c.weights);
  return c;
}

}  // namespace lfd
