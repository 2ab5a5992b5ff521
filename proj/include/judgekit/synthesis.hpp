#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "judgekit/errors.hpp"
#include "judgekit/policy.hpp"
#include "judgekit/task.hpp"
#include "judgekit/tools.hpp"

namespace judgekit::synthesis {

class GeneratorFailedError : public Error {
  using Error::Error;
};

struct SynthesisConfig {
  int docs_min = 1;
  int docs_max = 3;
  int records_target = 0;
  std::uint64_t seed = 0;
  /// Total generation attempts are capped at records_target * this factor;
  /// hitting the cap before the target is a generator failure.
  int max_attempts_factor = 10;
  int parallelism = 1;
  double temperature = 0.7;
  int max_tokens = 1024;
};

void validate(const SynthesisConfig& cfg);

enum class Order { PosFirst, PosSecond };
const char* to_string(Order o);

struct SynthesisRecord {
  std::string id;
  std::vector<std::string> source_doc_ids;
  std::string query;
  /// Generated with the source documents in the prompt.
  std::string positive;
  /// Generated from the bare query, no documents.
  std::string negative;
  Order presented_order = Order::PosFirst;
  std::string domain;
  std::string prompt_hash_pos;
  std::string prompt_hash_neg;
};

struct SynthesisTemplates {
  std::string query_prompt;     // {documents}
  std::string positive_prompt;  // {documents}, {query}
  std::string negative_prompt;  // {query}
  static SynthesisTemplates load(const std::string& dir);
};

/// "Title: {title}\n{text}" blocks joined by blank lines; this exact string
/// fills every {documents} placeholder, so prompt hashes are auditable.
std::string format_documents(const std::vector<tools::Document>& docs);

std::string build_query_prompt(const SynthesisTemplates& t,
                               const std::vector<tools::Document>& docs);
std::string build_positive_prompt(const SynthesisTemplates& t,
                                  const std::vector<tools::Document>& docs,
                                  const std::string& query);
std::string build_negative_prompt(const SynthesisTemplates& t,
                                  const std::string& query);

/// One query per call; responses shorter than 10 characters after trimming
/// are rejected and retried up to 3 times.
std::string generate_query(const std::vector<tools::Document>& docs,
                           engine::PolicyClient& generator,
                           const SynthesisTemplates& templates,
                           const SynthesisConfig& cfg,
                           std::uint64_t request_seed);

/// (positive, negative); both must be non-empty after trimming, each side
/// retried up to 3 times.
std::pair<std::string, std::string> generate_pair(
    const std::string& query, const std::vector<tools::Document>& docs,
    engine::PolicyClient& generator, const SynthesisTemplates& templates,
    const SynthesisConfig& cfg, std::uint64_t request_seed);

/// Runs the full pipeline: samples document sets and presentation order
/// under the seed, generates records in parallel, drops degenerate pairs
/// (positive == negative), and renumbers ids over the kept records. Output
/// is independent of the parallelism level.
std::vector<SynthesisRecord> assemble_dataset(const SynthesisConfig& cfg,
                                              const tools::CorpusIndex& corpus,
                                              engine::PolicyClient& generator,
                                              const SynthesisTemplates& templates);

/// The judging view: question = query, answers laid out by presented_order,
/// gold pointing at the positive side.
engine::JudgeTask to_judge_task(const SynthesisRecord& record);

std::string record_to_json_line(const SynthesisRecord& record);
SynthesisRecord record_from_json_line(const std::string& line);
void write_records_jsonl(const std::vector<SynthesisRecord>& records,
                         const std::string& path);
std::vector<SynthesisRecord> load_records_jsonl(const std::string& path);

/// Deterministic document-grounded generator: echoes document content for
/// positives, generic boilerplate for negatives, and a title-derived
/// question for queries. Stands in for a live endpoint in tests and --mock
/// runs.
std::shared_ptr<engine::PolicyClient> make_mock_generator();

}  // namespace judgekit::synthesis
