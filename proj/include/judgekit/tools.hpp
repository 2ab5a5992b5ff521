#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "judgekit/errors.hpp"
#include "judgekit/protocol.hpp"

namespace judgekit::tools {

struct Passage {
  std::string doc_id;
  std::string title;
  std::string text;
  double score = 0.0;
};

struct ToolResult {
  std::vector<Passage> passages;  // descending score, ties by ascending doc_id
  bool succeeded = false;
};

struct Document {
  std::string doc_id;
  std::string title;
  std::string text;
  std::string domain;
};

class DuplicateDocIdError : public Error {
  using Error::Error;
};

/// JSON-lines documents: {"doc_id", "title", "text", "domain"} per line.
std::vector<Document> load_documents_jsonl(const std::string& path);
void save_documents_jsonl(const std::vector<Document>& documents,
                          const std::string& path);

class UnknownToolError : public ConfigError {
  using ConfigError::ConfigError;
};

/// Okapi BM25 parameters. k1 = 1.2, b = 0.75 throughout; the IDF carries
/// the usual +0.5 smoothing plus 1 inside the log so scores stay
/// non-negative.
struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Immutable inverted index over a document collection. Title and body are
/// both indexed; tokenization is lowercase, split on non-alphanumeric
/// bytes. Safe for concurrent searches once built.
class CorpusIndex {
 public:
  static CorpusIndex build(const std::vector<Document>& documents);

  /// Top-k by BM25, ties broken by ascending doc_id. Documents matching no
  /// query term are excluded; succeeded is true iff at least one passage
  /// scored above zero.
  ToolResult search(const std::string& query, int k) const;

  std::size_t size() const { return docs_.size(); }
  std::size_t vocabulary_size() const { return postings_.size(); }
  double avg_doc_length() const { return avg_doc_length_; }
  const std::vector<Document>& documents() const { return docs_; }
  int doc_length(std::size_t doc_index) const { return doc_lengths_[doc_index]; }

  std::string to_json() const;
  static CorpusIndex from_json(const std::string& serialized);

 private:
  CorpusIndex() = default;

  struct Posting {
    std::uint32_t doc;  // index into docs_
    std::uint32_t tf;
  };

  std::vector<Document> docs_;  // sorted by doc_id ascending
  std::vector<int> doc_lengths_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  double avg_doc_length_ = 0.0;
  Bm25Params params_;
};

/// Formats retrieved passages as the body of an <information> block:
/// numbered entries of the form "[i] title", a dash, then the passage text,
/// cut back to a whitespace boundary when the rendering exceeds max_chars.
/// An empty result renders the fixed sentinel.
protocol::Segment format_information(const ToolResult& result, int max_chars);

inline constexpr const char* kNoResultsSentinel = "No results found.";

/// One retrieval backend. Implementations must tolerate concurrent calls.
class SearchBackend {
 public:
  virtual ~SearchBackend() = default;
  virtual ToolResult search(const std::string& query, int k) = 0;
};

class LocalIndexBackend : public SearchBackend {
 public:
  explicit LocalIndexBackend(std::shared_ptr<const CorpusIndex> index)
      : index_(std::move(index)) {}
  ToolResult search(const std::string& query, int k) override {
    return index_->search(query, k);
  }

 private:
  std::shared_ptr<const CorpusIndex> index_;
};

class ScriptedBackend : public SearchBackend {
 public:
  using Fn = std::function<ToolResult(const std::string&, int)>;
  explicit ScriptedBackend(Fn fn) : fn_(std::move(fn)) {}
  ToolResult search(const std::string& query, int k) override {
    return fn_(query, k);
  }

 private:
  Fn fn_;
};

/// HTTP backend: POST {tool, query, k} to base_url + path, expects
/// {passages: [{doc_id,title,text,score}], succeeded}. Any transport or
/// decode failure degrades to an unsuccessful empty result so the episode
/// can continue.
class RemoteBackend : public SearchBackend {
 public:
  struct Options {
    std::string base_url;        // e.g. http://127.0.0.1:8080
    std::string path = "/search";
    protocol::Tool tool = protocol::Tool::Wiki;
    int connect_timeout_ms = 2000;
    int read_timeout_ms = 5000;
  };
  explicit RemoteBackend(Options options) : options_(std::move(options)) {}
  ToolResult search(const std::string& query, int k) override;

 private:
  Options options_;
};

struct ToolRegistry {
  std::map<protocol::Tool, std::shared_ptr<SearchBackend>> backends;
};

/// Routes the call to the registered backend. A missing registry entry is a
/// configuration error and fails fast; backend failures surface as
/// unsuccessful results instead.
ToolResult dispatch(const ToolRegistry& registry, const protocol::ToolCall& call,
                    int k);

}  // namespace judgekit::tools
