#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "judgekit/config.hpp"
#include "judgekit/engine.hpp"
#include "judgekit/evalkit.hpp"
#include "judgekit/grpo.hpp"
#include "judgekit/synthesis.hpp"
#include "judgekit/trajectory.hpp"

namespace fs = std::filesystem;
using namespace judgekit;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string data_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  std::string variant;
  bool mock = false;
  std::string cassette;
  std::string record;
};

void add_common_flags(CLI::App* cmd, CommonOpts& opts, bool with_policy = true) {
  cmd->add_option("--config", opts.config_path, "config file (key = value sections)");
  cmd->add_option("--data", opts.data_path, "input JSON-lines file");
  cmd->add_option("--out", opts.out_path, "output file or directory");
  cmd->add_option("--seed", opts.seed, "override the config seed");
  cmd->add_option("--parallelism", opts.parallelism, "bounded worker count");
  cmd->add_option("--variant", opts.variant,
                  "reward variant: vanilla | em_only | full_weight | decoupled");
  if (with_policy) {
    cmd->add_flag("--mock", opts.mock, "use the built-in deterministic policy");
    cmd->add_option("--cassette", opts.cassette,
                    "replay recorded responses from this JSON-lines cassette");
    cmd->add_option("--record", opts.record,
                    "record live responses into this cassette file");
  }
}

config::AppConfig resolve_config(const CommonOpts& opts) {
  config::AppConfig cfg = opts.config_path.empty()
                              ? config::AppConfig{}
                              : config::load_config(opts.config_path);
  if (opts.seed) {
    cfg.seed = *opts.seed;
    cfg.grpo.seed = *opts.seed;
    cfg.synthesis.seed = *opts.seed;
  }
  if (opts.parallelism) {
    if (*opts.parallelism < 1)
      throw ConfigError("parallelism must be at least 1");
    cfg.parallelism = *opts.parallelism;
    cfg.synthesis.parallelism = *opts.parallelism;
  }
  if (!opts.variant.empty()) {
    const auto v = reward::variant_from_string(opts.variant);
    if (!v) throw ConfigError("unknown reward variant: " + opts.variant);
    cfg.reward.variant = *v;
  }
  if (!cfg.episode.seed) cfg.episode.seed = cfg.seed;
  std::cerr << "config_hash=" << config::config_hash(cfg)
            << " seed=" << cfg.seed << "\n";
  return cfg;
}

std::shared_ptr<engine::PolicyClient> make_policy(const CommonOpts& opts,
                                                  const config::AppConfig& cfg) {
  std::shared_ptr<engine::PolicyClient> policy;
  if (!opts.cassette.empty()) {
    policy = std::make_shared<engine::ReplayPolicyClient>(opts.cassette);
  } else if (opts.mock) {
    policy = std::make_shared<engine::OracleMockPolicyClient>();
  } else if (!cfg.endpoint.base_url.empty()) {
    policy = std::make_shared<engine::HttpPolicyClient>(cfg.endpoint);
  } else {
    throw ConfigError(
        "no policy backend: set endpoint.url in the config, or pass --mock "
        "or --cassette");
  }
  if (!opts.record.empty())
    policy = std::make_shared<engine::RecordingPolicyClient>(policy, opts.record);
  return policy;
}

std::vector<tools::Document> load_corpus(const config::AppConfig& cfg,
                                         bool required) {
  if (cfg.paths.corpus.empty()) {
    if (required) throw ConfigError("paths.corpus is not set");
    return {};
  }
  return tools::load_documents_jsonl(cfg.paths.corpus);
}

/// Wikipedia gets the open-domain slice, arXiv the scientific one; a slice
/// that would be empty falls back to the whole corpus. With no corpus at
/// all, both tools return unsuccessful empty results.
tools::ToolRegistry make_registry(const std::vector<tools::Document>& docs) {
  tools::ToolRegistry registry;
  if (docs.empty()) {
    auto empty = std::make_shared<tools::ScriptedBackend>(
        [](const std::string&, int) { return tools::ToolResult{}; });
    registry.backends[protocol::Tool::Wiki] = empty;
    registry.backends[protocol::Tool::Arxiv] = empty;
    return registry;
  }
  std::vector<tools::Document> wiki, arxiv;
  for (const tools::Document& d : docs)
    (d.domain == "scientific" ? arxiv : wiki).push_back(d);
  if (wiki.empty()) wiki = docs;
  if (arxiv.empty()) arxiv = docs;
  auto wiki_index = std::make_shared<const tools::CorpusIndex>(
      tools::CorpusIndex::build(wiki));
  auto arxiv_index = std::make_shared<const tools::CorpusIndex>(
      tools::CorpusIndex::build(arxiv));
  registry.backends[protocol::Tool::Wiki] =
      std::make_shared<tools::LocalIndexBackend>(wiki_index);
  registry.backends[protocol::Tool::Arxiv] =
      std::make_shared<tools::LocalIndexBackend>(arxiv_index);
  return registry;
}

std::string out_dir_of(const CommonOpts& opts, const config::AppConfig& cfg) {
  const std::string dir = opts.out_path.empty() ? cfg.paths.output : opts.out_path;
  fs::create_directories(dir);
  return dir;
}

struct JudgeSetup {
  std::shared_ptr<engine::PolicyClient> policy;
  tools::ToolRegistry registry;
  engine::PromptTemplates templates;
  evalkit::JudgeFn judge_fn;
};

JudgeSetup make_judge_setup(const CommonOpts& opts, const config::AppConfig& cfg,
                            bool corpus_required) {
  JudgeSetup setup;
  setup.policy = make_policy(opts, cfg);
  setup.registry = make_registry(load_corpus(cfg, corpus_required));
  setup.templates = engine::PromptTemplates::load(cfg.paths.templates);
  auto policy = setup.policy;
  auto registry = setup.registry;
  auto templates = setup.templates;
  auto episode = cfg.episode;
  setup.judge_fn = [policy, registry, templates,
                    episode](const engine::JudgeTask& task) {
    return engine::judge(task, *policy, registry, episode, templates);
  };
  return setup;
}

int cmd_index(const CommonOpts& opts) {
  const config::AppConfig cfg = resolve_config(opts);
  const std::string source =
      opts.data_path.empty() ? cfg.paths.corpus : opts.data_path;
  if (source.empty())
    throw ConfigError("paths.corpus is not set and no --data was given");
  const std::vector<tools::Document> docs = tools::load_documents_jsonl(source);
  const tools::CorpusIndex index = tools::CorpusIndex::build(docs);
  const std::string out = opts.out_path.empty()
                              ? (fs::path(cfg.paths.output) / "index.json").string()
                              : opts.out_path;
  fs::create_directories(fs::path(out).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(out).parent_path());
  std::ofstream file(out, std::ios::trunc | std::ios::binary);
  if (!file) throw ConfigError("cannot open for writing: " + out);
  file << index.to_json();
  std::cout << "indexed " << index.size() << " documents, vocabulary "
            << index.vocabulary_size() << ", avg length "
            << index.avg_doc_length() << ", written to " << out << "\n";
  return 0;
}

int cmd_synthesize(const CommonOpts& opts) {
  config::AppConfig cfg = resolve_config(opts);
  if (cfg.paths.corpus.empty())
    throw ConfigError("paths.corpus must be set for synthesis");
  const auto docs = tools::load_documents_jsonl(cfg.paths.corpus);
  const tools::CorpusIndex corpus = tools::CorpusIndex::build(docs);
  std::shared_ptr<engine::PolicyClient> generator;
  if (opts.mock) {
    generator = synthesis::make_mock_generator();
  } else {
    CommonOpts policy_opts = opts;
    policy_opts.mock = false;
    generator = make_policy(policy_opts, cfg);
  }
  const synthesis::SynthesisTemplates templates =
      synthesis::SynthesisTemplates::load(cfg.paths.templates);
  const auto records =
      synthesis::assemble_dataset(cfg.synthesis, corpus, *generator, templates);
  const std::string out =
      opts.out_path.empty()
          ? (fs::path(cfg.paths.output) / "synthesis.jsonl").string()
          : opts.out_path;
  if (!fs::path(out).parent_path().empty())
    fs::create_directories(fs::path(out).parent_path());
  synthesis::write_records_jsonl(records, out);
  int pos_first = 0;
  for (const auto& rec : records)
    pos_first += rec.presented_order == synthesis::Order::PosFirst ? 1 : 0;
  std::cout << "wrote " << records.size() << " records to " << out
            << " (pos_first " << pos_first << ", pos_second "
            << records.size() - pos_first << ")\n";
  return 0;
}

int cmd_judge(const CommonOpts& opts, const std::string& question,
              const std::string& answer_a, const std::string& answer_b,
              const std::string& domain) {
  const config::AppConfig cfg = resolve_config(opts);
  engine::JudgeTask task;
  if (!opts.data_path.empty()) {
    const auto tasks = engine::load_tasks_jsonl(opts.data_path);
    if (tasks.empty()) throw ConfigError("no tasks in " + opts.data_path);
    task = tasks.front();
  } else {
    if (question.empty() || answer_a.empty() || answer_b.empty())
      throw ConfigError(
          "judge needs --data or all of --question/--answer-a/--answer-b");
    task.id = "cli-task";
    task.question = question;
    task.answer_a = answer_a;
    task.answer_b = answer_b;
    const auto d = engine::domain_from_string(domain);
    if (!d) throw ConfigError("unknown domain: " + domain);
    task.domain = *d;
  }
  const JudgeSetup setup = make_judge_setup(opts, cfg, false);
  const engine::JudgeOutcome outcome = setup.judge_fn(task);
  std::cout << "verdict: "
            << (outcome.choice ? protocol::to_string(*outcome.choice)
                               : "abstain")
            << " (tool calls " << outcome.trajectory.tool_events.size()
            << ", truncated " << (outcome.trajectory.truncated ? "yes" : "no")
            << ")\n";
  if (!opts.out_path.empty()) {
    std::ofstream out(opts.out_path, std::ios::trunc | std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + opts.out_path);
    out << protocol::trajectory_to_json(outcome.trajectory) << "\n";
  }
  return 0;
}

int run_eval(const CommonOpts& opts, bool with_swap) {
  const config::AppConfig cfg = resolve_config(opts);
  if (opts.data_path.empty()) throw ConfigError("eval needs --data");
  const auto tasks = engine::load_tasks_jsonl(opts.data_path);
  const JudgeSetup setup = make_judge_setup(opts, cfg, false);
  std::vector<evalkit::EpisodeRow> rows;
  evalkit::EvalReport report =
      evalkit::evaluate(tasks, setup.judge_fn, cfg.parallelism, &rows);
  if (with_swap)
    report.swap_consistency =
        evalkit::swap_consistency(tasks, setup.judge_fn, cfg.parallelism);
  const std::string dir = out_dir_of(opts, cfg);
  {
    std::ofstream f(fs::path(dir) / "report.json",
                    std::ios::trunc | std::ios::binary);
    f << evalkit::report_to_json(report) << "\n";
  }
  {
    std::ofstream f(fs::path(dir) / "report.txt",
                    std::ios::trunc | std::ios::binary);
    f << evalkit::report_to_table(report);
  }
  evalkit::write_episode_rows_jsonl(rows,
                                    (fs::path(dir) / "episodes.jsonl").string());
  std::cout << evalkit::report_to_table(report);
  return 0;
}

int cmd_select(const CommonOpts& opts) {
  const config::AppConfig cfg = resolve_config(opts);
  if (opts.data_path.empty()) throw ConfigError("select needs --data");
  const auto tasks = engine::load_tasks_jsonl(opts.data_path);
  const JudgeSetup setup = make_judge_setup(opts, cfg, false);
  const auto selections =
      evalkit::select_data(tasks, setup.judge_fn, cfg.parallelism);
  const std::string out =
      opts.out_path.empty()
          ? (fs::path(cfg.paths.output) / "selections.jsonl").string()
          : opts.out_path;
  if (!fs::path(out).parent_path().empty())
    fs::create_directories(fs::path(out).parent_path());
  evalkit::write_selections_jsonl(selections, out);
  int decided = 0;
  for (const auto& sel : selections) decided += sel.winner ? 1 : 0;
  std::cout << "selected " << decided << "/" << selections.size()
            << " pairs (rest skipped), written to " << out << "\n";
  return 0;
}

int cmd_export_dpo(const CommonOpts& opts, const std::string& selections_path) {
  const config::AppConfig cfg = resolve_config(opts);
  if (opts.data_path.empty() || selections_path.empty())
    throw ConfigError("export-dpo needs --data and --selections");
  const auto tasks = engine::load_tasks_jsonl(opts.data_path);
  const auto selections = evalkit::load_selections_jsonl(selections_path);
  const auto pairs = evalkit::export_dpo(selections, tasks);
  const std::string out =
      opts.out_path.empty()
          ? (fs::path(cfg.paths.output) / "dpo.jsonl").string()
          : opts.out_path;
  if (!fs::path(out).parent_path().empty())
    fs::create_directories(fs::path(out).parent_path());
  evalkit::write_dpo_jsonl(pairs, out);
  std::cout << "exported " << pairs.size() << " preference pairs to " << out
            << "\n";
  return 0;
}

int cmd_grpo_toy(const CommonOpts& opts, double flip_prob,
                 std::optional<int> iterations, std::optional<double> lr) {
  config::AppConfig cfg = resolve_config(opts);
  if (iterations) cfg.grpo.iterations = *iterations;
  if (lr) cfg.grpo.learning_rate = *lr;
  reward::RewardConfig rc = cfg.reward;
  rc.normalize = false;
  const grpo::JudgingBandit bandit(rc, flip_prob);
  const grpo::TrainResult result = grpo::train_toy(bandit, cfg.grpo);

  if (!opts.out_path.empty()) {
    if (!fs::path(opts.out_path).parent_path().empty())
      fs::create_directories(fs::path(opts.out_path).parent_path());
    std::ofstream out(opts.out_path, std::ios::trunc | std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + opts.out_path);
    for (const grpo::TrainRecord& rec : result.history) {
      out << "{\"iteration\":" << rec.iteration << ",\"mean_reward\":"
          << rec.mean_reward << ",\"mean_advantage_abs\":"
          << rec.mean_advantage_abs << ",\"kl\":" << rec.kl
          << ",\"objective\":" << rec.objective << "}\n";
    }
  }
  const int window = std::min<int>(20, static_cast<int>(result.history.size()));
  double tail = 0.0;
  for (int i = 0; i < window; ++i)
    tail += result.history[result.history.size() - 1 - i].mean_reward;
  tail /= window;
  const auto probs = result.policy.probabilities();
  int best = 0;
  for (int a = 1; a < grpo::JudgingBandit::kNumActions; ++a)
    if (probs[a] > probs[best]) best = a;
  std::cout << "variant=" << reward::to_string(rc.variant)
            << " iterations=" << cfg.grpo.iterations
            << " flip_prob=" << flip_prob << "\n";
  std::cout << "trailing-20 mean reward: " << tail
            << " (bandit max expected " << bandit.max_expected_reward()
            << ")\n";
  std::cout << "modal action: " << grpo::JudgingBandit::action_name(best)
            << " p=" << probs[best] << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tool-augmented pairwise judging toolkit"};
  app.require_subcommand(1);

  CommonOpts index_opts, synth_opts, judge_opts, eval_opts, swap_opts,
      select_opts, dpo_opts, grpo_opts, replay_opts;
  std::string judge_question, judge_answer_a, judge_answer_b,
      judge_domain = "other";
  std::string dpo_selections;
  double grpo_flip = 0.0;
  std::optional<int> grpo_iterations;
  std::optional<double> grpo_lr;

  CLI::App* c_index = app.add_subcommand("index", "build the search index");
  add_common_flags(c_index, index_opts, false);

  CLI::App* c_synth =
      app.add_subcommand("synthesize", "run the preference-pair pipeline");
  add_common_flags(c_synth, synth_opts);

  CLI::App* c_judge = app.add_subcommand("judge", "judge one candidate pair");
  add_common_flags(c_judge, judge_opts);
  c_judge->add_option("--question", judge_question, "the question");
  c_judge->add_option("--answer-a", judge_answer_a, "first candidate");
  c_judge->add_option("--answer-b", judge_answer_b, "second candidate");
  c_judge->add_option("--domain", judge_domain,
                      "wiki | scientific | medical | other");

  CLI::App* c_eval = app.add_subcommand("eval", "accuracy over a labeled set");
  add_common_flags(c_eval, eval_opts);

  CLI::App* c_swap = app.add_subcommand(
      "swap-eval", "eval plus position-swap consistency");
  add_common_flags(c_swap, swap_opts);

  CLI::App* c_select =
      app.add_subcommand("select", "pick winners over unlabeled pairs");
  add_common_flags(c_select, select_opts);

  CLI::App* c_dpo =
      app.add_subcommand("export-dpo", "selections to preference pairs");
  add_common_flags(c_dpo, dpo_opts, false);
  c_dpo->add_option("--selections", dpo_selections,
                    "selections JSON-lines from `select`");

  CLI::App* c_grpo =
      app.add_subcommand("grpo-toy", "train the toy judging bandit");
  add_common_flags(c_grpo, grpo_opts, false);
  c_grpo->add_option("--flip-prob", grpo_flip,
                     "chance a tool call flips the realized verdict");
  c_grpo->add_option("--iterations", grpo_iterations, "training iterations");
  c_grpo->add_option("--lr", grpo_lr, "ascent step size");

  CLI::App* c_replay =
      app.add_subcommand("replay", "re-run an eval from a cassette");
  add_common_flags(c_replay, replay_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_index->parsed()) return cmd_index(index_opts);
    if (c_synth->parsed()) return cmd_synthesize(synth_opts);
    if (c_judge->parsed())
      return cmd_judge(judge_opts, judge_question, judge_answer_a,
                       judge_answer_b, judge_domain);
    if (c_eval->parsed()) return run_eval(eval_opts, false);
    if (c_swap->parsed()) return run_eval(swap_opts, true);
    if (c_select->parsed()) return cmd_select(select_opts);
    if (c_dpo->parsed()) return cmd_export_dpo(dpo_opts, dpo_selections);
    if (c_grpo->parsed())
      return cmd_grpo_toy(grpo_opts, grpo_flip, grpo_iterations, grpo_lr);
    if (c_replay->parsed()) {
      if (replay_opts.cassette.empty())
        throw ConfigError("replay needs --cassette");
      return run_eval(replay_opts, false);
    }
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}
