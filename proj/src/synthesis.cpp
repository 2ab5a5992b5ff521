#include "judgekit/synthesis.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "judgekit/engine.hpp"
#include "judgekit/util.hpp"

namespace judgekit::synthesis {

using nlohmann::json;

void validate(const SynthesisConfig& cfg) {
  if (cfg.docs_min < 1 || cfg.docs_max < cfg.docs_min)
    throw ConfigError("docs_per_query range must satisfy 1 <= min <= max");
  if (cfg.records_target < 1)
    throw ConfigError("records_target must be positive");
  if (cfg.max_attempts_factor < 1)
    throw ConfigError("max_attempts_factor must be positive");
  if (cfg.max_tokens < 1) throw ConfigError("max_tokens must be positive");
  if (cfg.temperature < 0.0)
    throw ConfigError("temperature must be non-negative");
}

const char* to_string(Order o) {
  return o == Order::PosFirst ? "pos_first" : "pos_second";
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open template: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r'))
    text.pop_back();
  return text;
}

void replace_all(std::string& text, const std::string& from,
                 const std::string& to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
}

void require_placeholder(const std::string& tpl, const char* ph,
                         const char* which) {
  if (tpl.find(ph) == std::string::npos)
    throw ConfigError(std::string(which) + " template is missing the " + ph +
                      " placeholder");
}

}  // namespace

SynthesisTemplates SynthesisTemplates::load(const std::string& dir) {
  SynthesisTemplates t;
  t.query_prompt = read_file(dir + "/query_prompt.txt");
  t.positive_prompt = read_file(dir + "/positive_prompt.txt");
  t.negative_prompt = read_file(dir + "/negative_prompt.txt");
  require_placeholder(t.query_prompt, "{documents}", "query");
  require_placeholder(t.positive_prompt, "{documents}", "positive");
  require_placeholder(t.positive_prompt, "{query}", "positive");
  require_placeholder(t.negative_prompt, "{query}", "negative");
  return t;
}

std::string format_documents(const std::vector<tools::Document>& docs) {
  std::string out;
  for (const tools::Document& d : docs) {
    if (!out.empty()) out += "\n\n";
    out += "Title: " + d.title + "\n" + d.text;
  }
  return out;
}

std::string build_query_prompt(const SynthesisTemplates& t,
                               const std::vector<tools::Document>& docs) {
  std::string prompt = t.query_prompt;
  replace_all(prompt, "{documents}", format_documents(docs));
  return prompt;
}

std::string build_positive_prompt(const SynthesisTemplates& t,
                                  const std::vector<tools::Document>& docs,
                                  const std::string& query) {
  std::string prompt = t.positive_prompt;
  replace_all(prompt, "{documents}", format_documents(docs));
  replace_all(prompt, "{query}", query);
  return prompt;
}

std::string build_negative_prompt(const SynthesisTemplates& t,
                                  const std::string& query) {
  std::string prompt = t.negative_prompt;
  replace_all(prompt, "{query}", query);
  return prompt;
}

namespace {

constexpr int kAttemptsPerPrompt = 3;
constexpr std::size_t kMinQueryChars = 10;

std::string request_generation(engine::PolicyClient& generator,
                               const std::string& prompt,
                               const SynthesisConfig& cfg,
                               std::uint64_t request_seed) {
  engine::GenerationRequest req;
  req.messages.push_back({engine::Role::User, prompt});
  req.temperature = cfg.temperature;
  req.max_tokens = cfg.max_tokens;
  req.seed = request_seed;
  return generator.generate(req).text;
}

}  // namespace

std::string generate_query(const std::vector<tools::Document>& docs,
                           engine::PolicyClient& generator,
                           const SynthesisTemplates& templates,
                           const SynthesisConfig& cfg,
                           std::uint64_t request_seed) {
  const std::string prompt = build_query_prompt(templates, docs);
  for (int attempt = 0; attempt < kAttemptsPerPrompt; ++attempt) {
    const std::string raw =
        request_generation(generator, prompt, cfg, request_seed + attempt);
    const std::string query{util::trim(raw)};
    if (query.size() >= kMinQueryChars) return query;
  }
  throw GeneratorFailedError("query generation produced no usable output in " +
                             std::to_string(kAttemptsPerPrompt) + " attempts");
}

std::pair<std::string, std::string> generate_pair(
    const std::string& query, const std::vector<tools::Document>& docs,
    engine::PolicyClient& generator, const SynthesisTemplates& templates,
    const SynthesisConfig& cfg, std::uint64_t request_seed) {
  auto generate_side = [&](const std::string& prompt,
                           std::uint64_t seed) -> std::string {
    for (int attempt = 0; attempt < kAttemptsPerPrompt; ++attempt) {
      const std::string raw =
          request_generation(generator, prompt, cfg, seed + attempt);
      const std::string text{util::trim(raw)};
      if (!text.empty()) return text;
    }
    throw GeneratorFailedError(
        "response generation produced no usable output in " +
        std::to_string(kAttemptsPerPrompt) + " attempts");
  };
  const std::string positive =
      generate_side(build_positive_prompt(templates, docs, query), request_seed);
  const std::string negative = generate_side(
      build_negative_prompt(templates, query), request_seed + kAttemptsPerPrompt);
  return {positive, negative};
}

namespace {

struct PlannedAttempt {
  std::vector<std::size_t> doc_indices;
  Order order = Order::PosFirst;
  std::uint64_t request_seed = 0;
};

// All randomness is drawn here, sequentially, before any parallel work, so
// the artifact is identical at every parallelism level.
PlannedAttempt plan_attempt(util::Rng& rng, const SynthesisConfig& cfg,
                            std::size_t corpus_size) {
  PlannedAttempt plan;
  const int span = cfg.docs_max - cfg.docs_min + 1;
  std::size_t want = static_cast<std::size_t>(
      cfg.docs_min + static_cast<int>(rng.uniform_index(
                         static_cast<std::size_t>(span))));
  want = std::min(want, corpus_size);
  while (plan.doc_indices.size() < want) {
    const std::size_t idx = rng.uniform_index(corpus_size);
    if (std::find(plan.doc_indices.begin(), plan.doc_indices.end(), idx) ==
        plan.doc_indices.end())
      plan.doc_indices.push_back(idx);
  }
  plan.order = rng.coin() ? Order::PosFirst : Order::PosSecond;
  plan.request_seed = rng.next_raw();
  return plan;
}

}  // namespace

std::vector<SynthesisRecord> assemble_dataset(const SynthesisConfig& cfg,
                                              const tools::CorpusIndex& corpus,
                                              engine::PolicyClient& generator,
                                              const SynthesisTemplates& templates) {
  validate(cfg);
  if (corpus.size() == 0)
    throw ConfigError("synthesis needs a non-empty corpus");
  const std::vector<tools::Document>& all_docs = corpus.documents();
  util::Rng rng(cfg.seed);

  const int attempts_cap = cfg.records_target * cfg.max_attempts_factor;
  int attempts_used = 0;
  std::vector<SynthesisRecord> kept;
  kept.reserve(static_cast<std::size_t>(cfg.records_target));

  while (static_cast<int>(kept.size()) < cfg.records_target) {
    const int missing = cfg.records_target - static_cast<int>(kept.size());
    const int wave = std::min(missing, attempts_cap - attempts_used);
    if (wave <= 0)
      throw GeneratorFailedError(
          "attempt budget exhausted after " + std::to_string(attempts_used) +
          " attempts with " + std::to_string(kept.size()) + " records kept");
    std::vector<PlannedAttempt> plans;
    plans.reserve(static_cast<std::size_t>(wave));
    for (int i = 0; i < wave; ++i)
      plans.push_back(plan_attempt(rng, cfg, all_docs.size()));

    std::vector<std::optional<SynthesisRecord>> results(plans.size());
    std::vector<std::exception_ptr> errors(plans.size());
    engine::parallel_for(
        plans.size(), cfg.parallelism, [&](std::size_t i) {
          try {
            const PlannedAttempt& plan = plans[i];
            std::vector<tools::Document> docs;
            docs.reserve(plan.doc_indices.size());
            for (std::size_t idx : plan.doc_indices)
              docs.push_back(all_docs[idx]);
            SynthesisRecord rec;
            rec.query = generate_query(docs, generator, templates, cfg,
                                       plan.request_seed);
            auto [positive, negative] = generate_pair(
                rec.query, docs, generator, templates, cfg,
                plan.request_seed + 101);
            if (positive == negative) return;  // degenerate, no signal
            rec.positive = std::move(positive);
            rec.negative = std::move(negative);
            for (const tools::Document& d : docs)
              rec.source_doc_ids.push_back(d.doc_id);
            rec.presented_order = plan.order;
            rec.domain = docs.front().domain;
            rec.prompt_hash_pos = util::fnv1a64_hex(
                build_positive_prompt(templates, docs, rec.query));
            rec.prompt_hash_neg = util::fnv1a64_hex(
                build_negative_prompt(templates, rec.query));
            results[i] = std::move(rec);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (errors[i]) std::rethrow_exception(errors[i]);
      if (results[i] && static_cast<int>(kept.size()) < cfg.records_target)
        kept.push_back(std::move(*results[i]));
    }
    attempts_used += wave;
  }

  char buf[16];
  for (std::size_t i = 0; i < kept.size(); ++i) {
    std::snprintf(buf, sizeof buf, "syn-%06zu", i + 1);
    kept[i].id = buf;
  }
  std::sort(kept.begin(), kept.end(),
            [](const SynthesisRecord& a, const SynthesisRecord& b) {
              return a.id < b.id;
            });
  return kept;
}

engine::JudgeTask to_judge_task(const SynthesisRecord& record) {
  engine::JudgeTask task;
  task.id = record.id;
  task.question = record.query;
  if (record.presented_order == Order::PosFirst) {
    task.answer_a = record.positive;
    task.answer_b = record.negative;
    task.gold = protocol::Choice::A;
  } else {
    task.answer_a = record.negative;
    task.answer_b = record.positive;
    task.gold = protocol::Choice::B;
  }
  task.domain = engine::domain_from_string(record.domain)
                    .value_or(engine::Domain::Other);
  return task;
}

std::string record_to_json_line(const SynthesisRecord& record) {
  const engine::JudgeTask task = to_judge_task(record);
  json j;
  j["id"] = record.id;
  j["domain"] = record.domain;
  j["question"] = task.question;
  j["answer_a"] = task.answer_a;
  j["answer_b"] = task.answer_b;
  j["gold"] = protocol::to_string(*task.gold);
  j["source_doc_ids"] = record.source_doc_ids;
  j["presented_order"] = to_string(record.presented_order);
  j["prompt_hash_pos"] = record.prompt_hash_pos;
  j["prompt_hash_neg"] = record.prompt_hash_neg;
  return j.dump();
}

SynthesisRecord record_from_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    SynthesisRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.domain = j.at("domain").get<std::string>();
    const std::string order = j.at("presented_order").get<std::string>();
    if (order == "pos_first")
      rec.presented_order = Order::PosFirst;
    else if (order == "pos_second")
      rec.presented_order = Order::PosSecond;
    else
      throw ConfigError("unknown presented_order: " + order);
    rec.query = j.at("question").get<std::string>();
    const std::string a = j.at("answer_a").get<std::string>();
    const std::string b = j.at("answer_b").get<std::string>();
    rec.positive = rec.presented_order == Order::PosFirst ? a : b;
    rec.negative = rec.presented_order == Order::PosFirst ? b : a;
    const std::string gold = j.at("gold").get<std::string>();
    const char* expect_gold =
        rec.presented_order == Order::PosFirst ? "A" : "B";
    if (gold != expect_gold)
      throw ConfigError("gold label contradicts presented_order for record " +
                        rec.id);
    rec.source_doc_ids =
        j.at("source_doc_ids").get<std::vector<std::string>>();
    rec.prompt_hash_pos = j.at("prompt_hash_pos").get<std::string>();
    rec.prompt_hash_neg = j.at("prompt_hash_neg").get<std::string>();
    return rec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad synthesis record: ") + e.what());
  }
}

void write_records_jsonl(const std::vector<SynthesisRecord>& records,
                         const std::string& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  for (const SynthesisRecord& rec : records)
    out << record_to_json_line(rec) << "\n";
}

std::vector<SynthesisRecord> load_records_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);
  std::vector<SynthesisRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (util::trim(line).empty()) continue;
    records.push_back(record_from_json_line(line));
  }
  return records;
}

namespace {

// Pulls the "Title: x" headers back out of a documents block.
std::vector<std::string> titles_in(const std::string& prompt) {
  std::vector<std::string> titles;
  std::istringstream ss(prompt);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.rfind("Title: ", 0) == 0)
      titles.push_back(line.substr(7));
  }
  return titles;
}

// Document bodies are the lines between one title header and the next
// blank-line boundary.
std::string bodies_in(const std::string& prompt) {
  std::string bodies;
  std::istringstream ss(prompt);
  std::string line;
  bool in_doc = false;
  while (std::getline(ss, line)) {
    if (line.rfind("Title: ", 0) == 0) {
      in_doc = true;
      continue;
    }
    if (in_doc) {
      if (line.empty() || line.rfind("Question:", 0) == 0) {
        in_doc = false;
        continue;
      }
      if (!bodies.empty()) bodies += ' ';
      bodies += line;
    }
  }
  return bodies;
}

}  // namespace

std::shared_ptr<engine::PolicyClient> make_mock_generator() {
  return std::make_shared<engine::FnPolicyClient>(
      [](const engine::GenerationRequest& req) {
        engine::Generation gen;
        gen.stop_reason = engine::StopReason::EndOfTurn;
        const std::string& prompt =
            req.messages.empty() ? std::string() : req.messages.back().content;
        if (prompt.find("Write exactly one self-contained question") !=
            std::string::npos) {
          const std::vector<std::string> titles = titles_in(prompt);
          std::string joined;
          for (const std::string& t : titles) {
            if (!joined.empty()) joined += " and ";
            joined += t;
          }
          if (joined.empty()) joined = "the referenced subject";
          gen.text = "What do the records state about " + joined + "?";
        } else if (prompt.find("using the reference documents") !=
                   std::string::npos) {
          std::string body = bodies_in(prompt);
          if (body.size() > 600) {
            body.resize(600);
            const std::size_t cut = body.find_last_of(' ');
            if (cut != std::string::npos) body.resize(cut);
          }
          gen.text = "According to the records, " + body;
        } else {
          gen.text =
              "Speaking generally and without consulting any source, the "
              "matter depends on context and no precise figures can be "
              "given here.";
        }
        return gen;
      });
}

}  // namespace judgekit::synthesis
