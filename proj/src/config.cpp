#include "judgekit/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "judgekit/util.hpp"

namespace judgekit::config {

namespace {

struct RawValue {
  std::string text;     // unquoted string payload or raw token
  bool quoted = false;  // came from a "..." literal
  std::string origin;   // file:line for diagnostics
};

std::string unescape(const std::string& s, const std::string& origin) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i >= s.size())
      throw ConfigError(origin + ": dangling backslash in string");
    switch (s[i]) {
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      default:
        throw ConfigError(origin + ": unsupported escape \\" +
                          std::string(1, s[i]));
    }
  }
  return out;
}

class KeyTable {
 public:
  KeyTable(std::string origin) : origin_(std::move(origin)) {}

  void insert(const std::string& section, const std::string& key,
              RawValue value) {
    const std::string full = section.empty() ? key : section + "." + key;
    if (!values_.emplace(full, std::move(value)).second)
      throw ConfigError(value.origin + ": duplicate key " + full);
  }

  bool has(const std::string& full) const { return values_.count(full) > 0; }

  std::string get_string(const std::string& full, std::string fallback) {
    auto it = values_.find(full);
    if (it == values_.end()) return fallback;
    consumed_.insert(full);
    if (!it->second.quoted)
      throw ConfigError(it->second.origin + ": " + full +
                        " must be a quoted string");
    return it->second.text;
  }

  template <typename T>
  T get_number(const std::string& full, T fallback) {
    auto it = values_.find(full);
    if (it == values_.end()) return fallback;
    consumed_.insert(full);
    if (it->second.quoted)
      throw ConfigError(it->second.origin + ": " + full + " must be a number");
    const std::string& tok = it->second.text;
    T out{};
    if constexpr (std::is_floating_point_v<T>) {
      try {
        std::size_t used = 0;
        out = static_cast<T>(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigError(it->second.origin + ": " + full +
                          " is not a valid number: " + tok);
      }
    } else {
      auto [end, ec] =
          std::from_chars(tok.data(), tok.data() + tok.size(), out);
      if (ec != std::errc{} || end != tok.data() + tok.size())
        throw ConfigError(it->second.origin + ": " + full +
                          " is not a valid integer: " + tok);
    }
    return out;
  }

  bool get_bool(const std::string& full, bool fallback) {
    auto it = values_.find(full);
    if (it == values_.end()) return fallback;
    consumed_.insert(full);
    if (it->second.quoted)
      throw ConfigError(it->second.origin + ": " + full +
                        " must be true or false");
    if (it->second.text == "true") return true;
    if (it->second.text == "false") return false;
    throw ConfigError(it->second.origin + ": " + full +
                      " must be true or false, got " + it->second.text);
  }

  void reject_unconsumed() const {
    for (const auto& [key, value] : values_) {
      if (!consumed_.count(key))
        throw ConfigError(value.origin + ": unknown config key " + key);
    }
  }

 private:
  std::string origin_;
  std::map<std::string, RawValue> values_;
  std::set<std::string> consumed_;
};

KeyTable parse_key_values(const std::string& text, const std::string& origin) {
  KeyTable table(origin);
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    std::string_view sv = util::trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    if (sv.front() == '[') {
      if (sv.back() != ']')
        throw ConfigError(where + ": malformed section header");
      section = std::string(util::trim(sv.substr(1, sv.size() - 2)));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const std::size_t eq = sv.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(where + ": expected key = value");
    const std::string key{util::trim(sv.substr(0, eq))};
    if (key.empty()) throw ConfigError(where + ": empty key");
    std::string_view rest = util::trim(sv.substr(eq + 1));
    if (rest.empty()) throw ConfigError(where + ": empty value for " + key);

    RawValue value;
    value.origin = where;
    if (rest.front() == '"') {
      // Scan to the closing unescaped quote; reject trailing junk beyond a
      // comment.
      std::string payload;
      std::size_t i = 1;
      bool closed = false;
      for (; i < rest.size(); ++i) {
        if (rest[i] == '\\' && i + 1 < rest.size()) {
          payload += rest[i];
          payload += rest[i + 1];
          ++i;
          continue;
        }
        if (rest[i] == '"') {
          closed = true;
          break;
        }
        payload += rest[i];
      }
      if (!closed) throw ConfigError(where + ": unterminated string");
      const std::string_view tail = util::trim(rest.substr(i + 1));
      if (!tail.empty() && tail.front() != '#')
        throw ConfigError(where + ": trailing characters after string");
      value.text = unescape(payload, where);
      value.quoted = true;
    } else {
      const std::size_t hash = rest.find('#');
      if (hash != std::string_view::npos) rest = util::trim(rest.substr(0, hash));
      value.text = std::string(rest);
      value.quoted = false;
    }
    table.insert(section, key, std::move(value));
  }
  return table;
}

void check_path_exists(const std::string& path, const char* key) {
  if (path.empty()) return;
  if (!std::filesystem::exists(path))
    throw ConfigError(std::string("config key ") + key +
                      " references a missing path: " + path);
}

}  // namespace

AppConfig parse_config_text(const std::string& text, const std::string& origin,
                            bool check_paths) {
  KeyTable t = parse_key_values(text, origin);
  AppConfig cfg;

  cfg.endpoint.base_url = t.get_string("endpoint.url", cfg.endpoint.base_url);
  cfg.endpoint.path = t.get_string("endpoint.path", cfg.endpoint.path);
  cfg.endpoint.model = t.get_string("endpoint.model", cfg.endpoint.model);
  cfg.endpoint.api_key_env =
      t.get_string("endpoint.api_key_env", cfg.endpoint.api_key_env);
  cfg.endpoint.max_attempts =
      t.get_number("endpoint.max_attempts", cfg.endpoint.max_attempts);
  cfg.endpoint.connect_timeout_ms = t.get_number(
      "endpoint.connect_timeout_ms", cfg.endpoint.connect_timeout_ms);
  cfg.endpoint.read_timeout_ms =
      t.get_number("endpoint.read_timeout_ms", cfg.endpoint.read_timeout_ms);
  cfg.endpoint.backoff_initial_ms = t.get_number(
      "endpoint.backoff_initial_ms", cfg.endpoint.backoff_initial_ms);

  cfg.episode.max_tool_calls =
      t.get_number("engine.max_tool_calls", cfg.episode.max_tool_calls);
  cfg.episode.max_prompt_tokens =
      t.get_number("engine.max_prompt_tokens", cfg.episode.max_prompt_tokens);
  cfg.episode.max_response_tokens = t.get_number(
      "engine.max_response_tokens", cfg.episode.max_response_tokens);
  cfg.episode.temperature =
      t.get_number("engine.temperature", cfg.episode.temperature);
  cfg.episode.passages_per_call =
      t.get_number("engine.passages_per_call", cfg.episode.passages_per_call);
  cfg.episode.information_max_chars =
      t.get_number("engine.information_max_chars",
                   cfg.episode.information_max_chars);

  const std::string variant_name = t.get_string(
      "reward.variant", reward::to_string(cfg.reward.variant));
  const auto variant = reward::variant_from_string(variant_name);
  if (!variant)
    throw ConfigError("reward.variant: unknown variant " + variant_name);
  cfg.reward.variant = *variant;
  cfg.reward.lambda = t.get_number("reward.lambda", cfg.reward.lambda);
  cfg.reward.normalize = t.get_bool("reward.normalize", cfg.reward.normalize);

  cfg.grpo.group_size = t.get_number("grpo.group_size", cfg.grpo.group_size);
  cfg.grpo.clip_epsilon =
      t.get_number("grpo.clip_epsilon", cfg.grpo.clip_epsilon);
  cfg.grpo.kl_beta = t.get_number("grpo.kl_beta", cfg.grpo.kl_beta);
  cfg.grpo.std_smooth = t.get_number("grpo.std_smooth", cfg.grpo.std_smooth);
  cfg.grpo.learning_rate =
      t.get_number("grpo.learning_rate", cfg.grpo.learning_rate);
  cfg.grpo.iterations = t.get_number("grpo.iterations", cfg.grpo.iterations);

  cfg.synthesis.docs_min =
      t.get_number("synthesis.docs_min", cfg.synthesis.docs_min);
  cfg.synthesis.docs_max =
      t.get_number("synthesis.docs_max", cfg.synthesis.docs_max);
  cfg.synthesis.records_target =
      t.get_number("synthesis.records_target", cfg.synthesis.records_target);
  cfg.synthesis.max_attempts_factor = t.get_number(
      "synthesis.max_attempts_factor", cfg.synthesis.max_attempts_factor);
  cfg.synthesis.temperature =
      t.get_number("synthesis.temperature", cfg.synthesis.temperature);
  cfg.synthesis.max_tokens =
      t.get_number("synthesis.max_tokens", cfg.synthesis.max_tokens);

  cfg.paths.corpus = t.get_string("paths.corpus", cfg.paths.corpus);
  cfg.paths.templates = t.get_string("paths.templates", cfg.paths.templates);
  cfg.paths.output = t.get_string("paths.output", cfg.paths.output);

  cfg.parallelism = t.get_number("parallelism", cfg.parallelism);
  cfg.seed = t.get_number("seed", cfg.seed);

  t.reject_unconsumed();

  if (cfg.parallelism < 1) throw ConfigError("parallelism must be at least 1");
  engine::validate(cfg.episode);
  grpo::validate(cfg.grpo);
  if (check_paths) {
    check_path_exists(cfg.paths.corpus, "paths.corpus");
    check_path_exists(cfg.paths.templates, "paths.templates");
  }
  cfg.grpo.seed = cfg.seed;
  cfg.synthesis.seed = cfg.seed;
  cfg.synthesis.parallelism = cfg.parallelism;
  return cfg;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::string canonical_dump(const AppConfig& cfg) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "endpoint.url=" << cfg.endpoint.base_url << "\n";
  out << "endpoint.path=" << cfg.endpoint.path << "\n";
  out << "endpoint.model=" << cfg.endpoint.model << "\n";
  out << "endpoint.api_key_env=" << cfg.endpoint.api_key_env << "\n";
  out << "endpoint.max_attempts=" << cfg.endpoint.max_attempts << "\n";
  out << "endpoint.connect_timeout_ms=" << cfg.endpoint.connect_timeout_ms
      << "\n";
  out << "endpoint.read_timeout_ms=" << cfg.endpoint.read_timeout_ms << "\n";
  out << "endpoint.backoff_initial_ms=" << cfg.endpoint.backoff_initial_ms
      << "\n";
  out << "engine.max_tool_calls=" << cfg.episode.max_tool_calls << "\n";
  out << "engine.max_prompt_tokens=" << cfg.episode.max_prompt_tokens << "\n";
  out << "engine.max_response_tokens=" << cfg.episode.max_response_tokens
      << "\n";
  out << "engine.temperature=" << cfg.episode.temperature << "\n";
  out << "engine.passages_per_call=" << cfg.episode.passages_per_call << "\n";
  out << "engine.information_max_chars=" << cfg.episode.information_max_chars
      << "\n";
  out << "reward.variant=" << reward::to_string(cfg.reward.variant) << "\n";
  out << "reward.lambda=" << cfg.reward.lambda << "\n";
  out << "reward.normalize=" << (cfg.reward.normalize ? "true" : "false")
      << "\n";
  out << "grpo.group_size=" << cfg.grpo.group_size << "\n";
  out << "grpo.clip_epsilon=" << cfg.grpo.clip_epsilon << "\n";
  out << "grpo.kl_beta=" << cfg.grpo.kl_beta << "\n";
  out << "grpo.std_smooth=" << cfg.grpo.std_smooth << "\n";
  out << "grpo.learning_rate=" << cfg.grpo.learning_rate << "\n";
  out << "grpo.iterations=" << cfg.grpo.iterations << "\n";
  out << "synthesis.docs_min=" << cfg.synthesis.docs_min << "\n";
  out << "synthesis.docs_max=" << cfg.synthesis.docs_max << "\n";
  out << "synthesis.records_target=" << cfg.synthesis.records_target << "\n";
  out << "synthesis.max_attempts_factor=" << cfg.synthesis.max_attempts_factor
      << "\n";
  out << "synthesis.temperature=" << cfg.synthesis.temperature << "\n";
  out << "synthesis.max_tokens=" << cfg.synthesis.max_tokens << "\n";
  out << "paths.corpus=" << cfg.paths.corpus << "\n";
  out << "paths.templates=" << cfg.paths.templates << "\n";
  out << "paths.output=" << cfg.paths.output << "\n";
  out << "parallelism=" << cfg.parallelism << "\n";
  out << "seed=" << cfg.seed << "\n";
  return out.str();
}

std::string config_hash(const AppConfig& cfg) {
  return util::fnv1a64_hex(canonical_dump(cfg));
}

}  // namespace judgekit::config
