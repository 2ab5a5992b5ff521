#include "judgekit/tools.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <httplib.h>
#include <json.hpp>

#include "judgekit/util.hpp"

namespace judgekit::tools {

using nlohmann::json;

CorpusIndex CorpusIndex::build(const std::vector<Document>& documents) {
  CorpusIndex index;
  index.docs_ = documents;
  std::sort(index.docs_.begin(), index.docs_.end(),
            [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
  for (std::size_t i = 1; i < index.docs_.size(); ++i) {
    if (index.docs_[i].doc_id == index.docs_[i - 1].doc_id) {
      throw DuplicateDocIdError("duplicate doc_id: " + index.docs_[i].doc_id);
    }
  }

  long long total_length = 0;
  index.doc_lengths_.resize(index.docs_.size(), 0);
  for (std::size_t i = 0; i < index.docs_.size(); ++i) {
    std::vector<std::string> tokens = util::tokenize(index.docs_[i].title);
    std::vector<std::string> body = util::tokenize(index.docs_[i].text);
    tokens.insert(tokens.end(), body.begin(), body.end());
    index.doc_lengths_[i] = static_cast<int>(tokens.size());
    total_length += static_cast<long long>(tokens.size());

    std::map<std::string, std::uint32_t> counts;
    for (auto& t : tokens) ++counts[t];
    for (auto& [term, tf] : counts) {
      index.postings_[term].push_back({static_cast<std::uint32_t>(i), tf});
    }
  }
  index.avg_doc_length_ =
      index.docs_.empty() ? 0.0
                          : static_cast<double>(total_length) /
                                static_cast<double>(index.docs_.size());
  return index;
}

ToolResult CorpusIndex::search(const std::string& query, int k) const {
  ToolResult result;
  if (k < 1 || docs_.empty()) return result;

  // Score accumulation walks query tokens in order so floating-point sums
  // match a per-document brute-force evaluation term for term.
  std::unordered_map<std::uint32_t, double> scores;
  const double n_docs = static_cast<double>(docs_.size());
  for (const auto& term : util::tokenize(query)) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double df = static_cast<double>(it->second.size());
    const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
    for (const Posting& p : it->second) {
      const double tf = static_cast<double>(p.tf);
      const double dl = static_cast<double>(doc_lengths_[p.doc]);
      const double denom =
          tf + params_.k1 * (1.0 - params_.b + params_.b * dl / avg_doc_length_);
      scores[p.doc] += idf * tf * (params_.k1 + 1.0) / denom;
    }
  }

  std::vector<std::pair<std::uint32_t, double>> ranked;
  ranked.reserve(scores.size());
  for (auto& [doc, score] : scores) {
    if (score > 0.0) ranked.emplace_back(doc, score);
  }
  // docs_ is sorted by doc_id, so ascending index is ascending doc_id.
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > static_cast<std::size_t>(k)) ranked.resize(static_cast<std::size_t>(k));

  for (auto& [doc, score] : ranked) {
    const Document& d = docs_[doc];
    result.passages.push_back({d.doc_id, d.title, d.text, score});
  }
  result.succeeded = !result.passages.empty();
  return result;
}

std::string CorpusIndex::to_json() const {
  json docs = json::array();
  for (const auto& d : docs_) {
    docs.push_back({{"doc_id", d.doc_id},
                    {"title", d.title},
                    {"text", d.text},
                    {"domain", d.domain}});
  }
  json out = {{"schema_version", 1},
              {"documents", docs},
              {"stats",
               {{"document_count", docs_.size()},
                {"vocabulary_size", postings_.size()},
                {"avg_doc_length", avg_doc_length_}}}};
  return out.dump();
}

CorpusIndex CorpusIndex::from_json(const std::string& serialized) {
  json in = json::parse(serialized);
  std::vector<Document> docs;
  for (const auto& d : in.at("documents")) {
    docs.push_back({d.at("doc_id").get<std::string>(),
                    d.at("title").get<std::string>(),
                    d.at("text").get<std::string>(),
                    d.value("domain", std::string())});
  }
  return build(docs);
}

namespace {

bool is_ascii_ws(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Cut back to the last whitespace at or before limit, never splitting a
// UTF-8 sequence; falls back to a plain byte cut on whitespace-free text.
std::string truncate_at_whitespace(const std::string& text, std::size_t limit) {
  if (text.size() <= limit) return text;
  std::size_t cut = std::string::npos;
  for (std::size_t i = 0; i <= limit && i < text.size(); ++i) {
    if (is_ascii_ws(text[i])) cut = i;
  }
  std::string out;
  if (cut != std::string::npos) {
    out = text.substr(0, cut);
  } else {
    std::size_t end = limit;
    while (end > 0 && (static_cast<unsigned char>(text[end]) & 0xC0) == 0x80) --end;
    out = text.substr(0, end);
  }
  while (!out.empty() && is_ascii_ws(out.back())) out.pop_back();
  return out;
}

}  // namespace

protocol::Segment format_information(const ToolResult& result, int max_chars) {
  if (result.passages.empty()) {
    return protocol::Information{kNoResultsSentinel};
  }
  std::string body;
  for (std::size_t i = 0; i < result.passages.size(); ++i) {
    if (i > 0) body.push_back('\n');
    const Passage& p = result.passages[i];
    body += "[" + std::to_string(i + 1) + "] " + p.title + " — " + p.text;
  }
  std::string cut = truncate_at_whitespace(body, static_cast<std::size_t>(max_chars));
  if (cut.empty()) cut = kNoResultsSentinel;
  return protocol::Information{std::move(cut)};
}

ToolResult RemoteBackend::search(const std::string& query, int k) {
  try {
    httplib::Client client(options_.base_url);
    client.set_connection_timeout(0, options_.connect_timeout_ms * 1000);
    client.set_read_timeout(options_.read_timeout_ms / 1000,
                            (options_.read_timeout_ms % 1000) * 1000);
    json body = {{"tool", util::to_lower(protocol::to_string(options_.tool))},
                 {"query", query},
                 {"k", k}};
    auto res = client.Post(options_.path, body.dump(), "application/json");
    if (!res || res->status != 200) return ToolResult{};

    json parsed = json::parse(res->body);
    ToolResult result;
    for (const auto& p : parsed.value("passages", json::array())) {
      result.passages.push_back({p.value("doc_id", std::string()),
                                 p.value("title", std::string()),
                                 p.value("text", std::string()),
                                 p.value("score", 0.0)});
    }
    result.succeeded = parsed.value("succeeded", !result.passages.empty());
    return result;
  } catch (const std::exception&) {
    return ToolResult{};
  }
}

ToolResult dispatch(const ToolRegistry& registry, const protocol::ToolCall& call,
                    int k) {
  auto it = registry.backends.find(call.tool);
  if (it == registry.backends.end() || it->second == nullptr) {
    throw UnknownToolError(std::string("no backend registered for tool ") +
                           protocol::to_string(call.tool));
  }
  return it->second->search(call.query, k);
}

std::vector<Document> load_documents_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open documents file: " + path);
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      Document d;
      d.doc_id = j.at("doc_id").get<std::string>();
      d.title = j.at("title").get<std::string>();
      d.text = j.at("text").get<std::string>();
      d.domain = j.value("domain", std::string("other"));
      if (d.doc_id.empty())
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": empty doc_id");
      docs.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": bad document: " + e.what());
    }
  }
  return docs;
}

void save_documents_jsonl(const std::vector<Document>& documents,
                          const std::string& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  for (const Document& d : documents) {
    json j;
    j["doc_id"] = d.doc_id;
    j["title"] = d.title;
    j["text"] = d.text;
    j["domain"] = d.domain;
    out << j.dump() << "\n";
  }
}

}  // namespace judgekit::tools
