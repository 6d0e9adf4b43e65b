#include "puffline/config.hpp"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "puffline/io.hpp"

namespace puffline {

namespace {

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const FullConfig&)> get;
  std::function<void(FullConfig&, const std::string&)> set;
};

double to_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number: " + s);
  }
}

int to_int(const std::string& s) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("bad integer: " + s);
  }
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("bad unsigned integer: " + s);
  }
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("bad boolean: " + s);
}

#define FIELD_DOUBLE(SECTION, KEY, EXPR)                                     \
  Field{SECTION, KEY,                                                        \
        [](const FullConfig& c) { return format_double(c.EXPR); },           \
        [](FullConfig& c, const std::string& v) { c.EXPR = to_double(v); }}
#define FIELD_INT(SECTION, KEY, EXPR)                                 \
  Field{SECTION, KEY,                                                 \
        [](const FullConfig& c) { return std::to_string(c.EXPR); },   \
        [](FullConfig& c, const std::string& v) { c.EXPR = to_int(v); }}
#define FIELD_U64(SECTION, KEY, EXPR)                                 \
  Field{SECTION, KEY,                                                 \
        [](const FullConfig& c) { return std::to_string(c.EXPR); },   \
        [](FullConfig& c, const std::string& v) { c.EXPR = to_u64(v); }}
#define FIELD_BOOL(SECTION, KEY, EXPR)                                       \
  Field{SECTION, KEY,                                                        \
        [](const FullConfig& c) { return c.EXPR ? "true" : "false"; },       \
        [](FullConfig& c, const std::string& v) { c.EXPR = to_bool(v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      FIELD_DOUBLE("signal", "cutoff_hz", pipeline.signal.cutoff_hz),
      FIELD_INT("signal", "taps", pipeline.signal.taps),
      FIELD_DOUBLE("signal", "target_fs", pipeline.signal.target_fs),

      FIELD_DOUBLE("windows", "win_len_s", pipeline.windows.win_len_s),
      FIELD_DOUBLE("windows", "step_s", pipeline.windows.step_s),
      FIELD_DOUBLE("windows", "label_epsilon_s",
                   pipeline.windows.label_epsilon_s),
      FIELD_INT("windows", "augment_factor", pipeline.augment_factor),
      FIELD_DOUBLE("windows", "negative_ratio", pipeline.negative_ratio),

      FIELD_INT("net", "input_len", pipeline.net.input_len),
      FIELD_INT("net", "input_channels", pipeline.net.input_channels),
      FIELD_INT("net", "conv1_filters", pipeline.net.conv1_filters),
      FIELD_INT("net", "conv1_kernel", pipeline.net.conv1_kernel),
      FIELD_INT("net", "conv2_filters", pipeline.net.conv2_filters),
      FIELD_INT("net", "conv2_kernel", pipeline.net.conv2_kernel),
      FIELD_INT("net", "conv3_filters", pipeline.net.conv3_filters),
      FIELD_INT("net", "conv3_kernel", pipeline.net.conv3_kernel),
      FIELD_INT("net", "lstm_cells", pipeline.net.lstm_cells),
      FIELD_DOUBLE("net", "dropout_rate", pipeline.net.dropout_rate),
      Field{"net", "lstm_inner_activation",
            [](const FullConfig& c) {
              return c.pipeline.net.lstm_inner_activation ==
                             NetConfig::InnerActivation::Tanh
                         ? "tanh"
                         : "sigmoid";
            },
            [](FullConfig& c, const std::string& v) {
              if (v == "tanh") {
                c.pipeline.net.lstm_inner_activation =
                    NetConfig::InnerActivation::Tanh;
              } else if (v == "sigmoid") {
                c.pipeline.net.lstm_inner_activation =
                    NetConfig::InnerActivation::Sigmoid;
              } else {
                throw ConfigError("lstm_inner_activation must be tanh or sigmoid");
              }
            }},

      FIELD_DOUBLE("train", "learning_rate", pipeline.train.learning_rate),
      FIELD_INT("train", "batch_size", pipeline.train.batch_size),
      FIELD_INT("train", "epochs", pipeline.train.epochs),
      FIELD_DOUBLE("train", "rmsprop_decay", pipeline.train.rmsprop_decay),
      FIELD_DOUBLE("train", "rmsprop_epsilon", pipeline.train.rmsprop_epsilon),

      FIELD_DOUBLE("detect", "lambda_p", pipeline.detect.lambda_p),
      FIELD_INT("detect", "min_distance", pipeline.detect.min_distance),
      FIELD_BOOL("detect", "threshold_first", pipeline.detect.threshold_first),

      FIELD_DOUBLE("sessions", "eps", pipeline.sessions.eps),
      FIELD_INT("sessions", "min_pts", pipeline.sessions.min_pts),

      FIELD_DOUBLE("eval", "weight_puffs", pipeline.eval.weight_puffs),
      FIELD_DOUBLE("eval", "weight_sessions", pipeline.eval.weight_sessions),
      FIELD_DOUBLE("eval", "window_threshold",
                   pipeline.eval.window_threshold),

      FIELD_U64("pipeline", "seed", pipeline.seed),

      FIELD_INT("synth", "n_subjects", synth.n_subjects),
      FIELD_INT("synth", "sessions_per_subject", synth.sessions_per_subject),
      FIELD_INT("synth", "puffs_min", synth.puffs_min),
      FIELD_INT("synth", "puffs_max", synth.puffs_max),
      FIELD_DOUBLE("synth", "puff_duration_median_s",
                   synth.puff_duration_median_s),
      FIELD_DOUBLE("synth", "puff_duration_std_s", synth.puff_duration_std_s),
      FIELD_DOUBLE("synth", "session_duration_mean_s",
                   synth.session_duration_mean_s),
      FIELD_DOUBLE("synth", "session_duration_std_s",
                   synth.session_duration_std_s),
      FIELD_DOUBLE("synth", "inter_session_gap_s", synth.inter_session_gap_s),
      FIELD_DOUBLE("synth", "gap_jitter_s", synth.gap_jitter_s),
      FIELD_DOUBLE("synth", "lead_s", synth.lead_s),
      FIELD_DOUBLE("synth", "noise_amplitude", synth.noise_amplitude),
      FIELD_DOUBLE("synth", "gesture_amplitude", synth.gesture_amplitude),
      FIELD_DOUBLE("synth", "recording_length_s", synth.recording_length_s),
      FIELD_DOUBLE("synth", "sample_rate_hz", synth.sample_rate_hz),
      FIELD_U64("synth", "seed", synth.seed),
  };
  return table;
}

#undef FIELD_DOUBLE
#undef FIELD_INT
#undef FIELD_U64
#undef FIELD_BOOL

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

FullConfig parse_config(const std::string& text) {
  FullConfig config;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& f : fields()) {
        if (section == f.section) {
          known = true;
          break;
        }
      }
      if (!known) throw ConfigError("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& f : fields()) {
      if (section == f.section && key == f.key) {
        f.set(config, value);
        found = true;
        break;
      }
    }
    if (!found) {
      throw ConfigError("unknown key " + key + " in section [" + section + "]");
    }
  }
  return config;
}

FullConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const FullConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << '\n';
  }
  return out.str();
}

std::string config_hash(const FullConfig& config) {
  const std::string text = serialize_config(config);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace puffline
