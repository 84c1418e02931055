#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "seccoder/common.hpp"

namespace seccoder {

/// One vetted secure program that can be shown to the model as a demonstration.
struct SecureCodeEntry {
  std::string id;
  std::string code;
  Language language = Language::python;
  std::optional<std::string> cwe_tag;
  std::size_t token_count = 0;

  bool operator==(const SecureCodeEntry&) const = default;
};

/// Raw, unvalidated record as read from an ingest file.
struct EntryRecord {
  std::optional<std::string> id;
  std::string code;
  std::string language;
  std::optional<std::string> cwe;
  std::size_t line = 0;  ///< source line when read from a file
};

/// Builds a checked entry; token_count is computed, never trusted from input.
SecureCodeEntry make_entry(std::string id, std::string code, Language language,
                           std::optional<std::string> cwe_tag = std::nullopt);

/// Immutable, insertion-ordered collection of demonstrations.
class DemoStore {
 public:
  DemoStore() = default;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::span<const SecureCodeEntry> entries() const noexcept { return entries_; }
  const SecureCodeEntry& operator[](std::size_t i) const { return entries_.at(i); }

  const SecureCodeEntry* find(const std::string& id) const;
  /// Insertion index of `id`, if present.
  std::optional<std::size_t> index_of(const std::string& id) const;

  /// Entries above this many tokens are refused by expand().
  std::optional<std::size_t> token_budget() const noexcept { return budget_; }
  DemoStore with_budget(std::optional<std::size_t> budget) const;

  bool operator==(const DemoStore& other) const { return entries_ == other.entries_; }

 private:
  friend DemoStore ingest(std::span<const EntryRecord>);
  friend DemoStore expand(const DemoStore&, SecureCodeEntry);
  friend DemoStore filter_by_budget(const DemoStore&, long long);

  void push(SecureCodeEntry e);

  std::vector<SecureCodeEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::optional<std::size_t> budget_;
};

/// Validates records and assigns "d<index>" to records without an id.
DemoStore ingest(std::span<const EntryRecord> records);

/// Returns a new store with `entry` appended. Rejects duplicate ids and,
/// when the store has a budget, entries whose token_count exceeds it.
DemoStore expand(const DemoStore& store, SecureCodeEntry entry);

/// Keeps entries with token_count <= budget, in order.
DemoStore filter_by_budget(const DemoStore& store, long long budget);

/// Entries of one language, ids and order kept.
DemoStore filter_by_language(const DemoStore& store, Language lang);

/// JSONL with keys id, code, language, cwe.
void save_store(const DemoStore& store, const std::filesystem::path& path);
DemoStore load_store(const std::filesystem::path& path);

/// Parses JSONL ingest records; errors carry the 1-based line number.
std::vector<EntryRecord> read_records(const std::filesystem::path& path);
std::vector<EntryRecord> parse_records(std::string_view jsonl);

}  // namespace seccoder
