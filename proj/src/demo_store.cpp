#include "seccoder/demo_store.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "seccoder/error.hpp"
#include "seccoder/tokenize.hpp"

namespace seccoder {

using nlohmann::json;

SecureCodeEntry make_entry(std::string id, std::string code, Language language,
                           std::optional<std::string> cwe_tag) {
  if (id.empty()) throw ValidationError("entry id is empty");
  if (trim(code).empty()) throw ValidationError("entry " + id + ": code is empty");
  if (cwe_tag && !is_cwe_id(*cwe_tag)) {
    throw ValidationError("entry " + id + ": malformed CWE tag \"" + *cwe_tag + "\"");
  }
  SecureCodeEntry e{std::move(id), std::move(code), language, std::move(cwe_tag), 0};
  e.token_count = count_tokens(e.code);
  return e;
}

const SecureCodeEntry* DemoStore::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &entries_[it->second];
}

std::optional<std::size_t> DemoStore::index_of(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

DemoStore DemoStore::with_budget(std::optional<std::size_t> budget) const {
  DemoStore s = *this;
  s.budget_ = budget;
  return s;
}

void DemoStore::push(SecureCodeEntry e) {
  if (by_id_.count(e.id)) throw ValidationError("duplicate entry id \"" + e.id + "\"");
  by_id_.emplace(e.id, entries_.size());
  entries_.push_back(std::move(e));
}

DemoStore ingest(std::span<const EntryRecord> records) {
  DemoStore store;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EntryRecord& r = records[i];
    std::string id = r.id ? *r.id : "d" + std::to_string(i);
    try {
      store.push(make_entry(std::move(id), r.code, parse_language(r.language), r.cwe));
    } catch (const ValidationError& e) {
      if (r.line == 0) throw;
      throw ParseError(e.what(), r.line);
    }
  }
  return store;
}

DemoStore expand(const DemoStore& store, SecureCodeEntry entry) {
  // Re-derive the count so a hand-built entry cannot smuggle in a wrong one.
  entry = make_entry(std::move(entry.id), std::move(entry.code), entry.language,
                     std::move(entry.cwe_tag));
  if (store.budget_ && entry.token_count > *store.budget_) {
    throw ValidationError("entry " + entry.id + " has " + std::to_string(entry.token_count) +
                          " tokens, over the budget of " + std::to_string(*store.budget_));
  }
  DemoStore out = store;
  out.push(std::move(entry));
  return out;
}

DemoStore filter_by_language(const DemoStore& store, Language lang) {
  std::vector<EntryRecord> recs;
  for (const auto& e : store.entries()) {
    if (e.language == lang) recs.push_back({e.id, e.code, std::string(to_string(lang)), e.cwe_tag});
  }
  return ingest(recs).with_budget(store.token_budget());
}

DemoStore filter_by_budget(const DemoStore& store, long long budget) {
  if (budget <= 0) throw ValidationError("token budget must be positive");
  DemoStore out;
  out.budget_ = static_cast<std::size_t>(budget);
  for (const auto& e : store.entries_) {
    if (e.token_count <= static_cast<std::size_t>(budget)) out.push(e);
  }
  return out;
}

namespace {

json entry_to_json(const SecureCodeEntry& e) {
  json j{{"id", e.id}, {"code", e.code}, {"language", std::string(to_string(e.language))}};
  if (e.cwe_tag) j["cwe"] = *e.cwe_tag;
  return j;
}

EntryRecord record_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError("expected a JSON object", line);
  auto str = [&](const char* key, bool required) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
      if (required) throw ParseError(std::string("missing \"") + key + "\" field", line);
      return std::nullopt;
    }
    if (!it->is_string()) throw ParseError(std::string("\"") + key + "\" must be a string", line);
    return it->get<std::string>();
  };
  EntryRecord r;
  r.id = str("id", false);
  r.code = *str("code", true);
  r.language = *str("language", true);
  r.cwe = str("cwe", false);
  r.line = line;
  return r;
}

}  // namespace

std::vector<EntryRecord> parse_records(std::string_view jsonl) {
  std::vector<EntryRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t nl = jsonl.find('\n', pos);
    if (nl == std::string_view::npos) nl = jsonl.size();
    std::string_view line = jsonl.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    out.push_back(record_from_json(j, line_no));
  }
  return out;
}

std::vector<EntryRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_records(ss.str());
}

void save_store(const DemoStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& e : store.entries()) out << entry_to_json(e).dump() << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

DemoStore load_store(const std::filesystem::path& path) {
  auto records = read_records(path);
  return ingest(records);
}

}  // namespace seccoder
