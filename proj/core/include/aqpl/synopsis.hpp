#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aqpl/entry.hpp"
#include "aqpl/kernel.hpp"
#include "aqpl/relation.hpp"

namespace aqpl {

/// A recorded append: used to keep old entries usable and replayable.
struct AppendEvent {
  std::uint64_t from_version = 0;
  std::uint64_t to_version = 0;
  std::size_t old_rows = 0;
  std::size_t new_rows = 0;
  std::map<std::string, std::pair<double, double>> shifts;  // key -> (mu_k, eta2_k)
  std::size_t evicted_freq = 0;
};

/// Past snippets per aggregate key, LRU-capped at `cap` entries per key.
class Synopsis {
 public:
  static constexpr int kFormatVersion = 1;

  explicit Synopsis(std::size_t cap = 2000) : cap_(cap) {}

  std::size_t cap() const noexcept { return cap_; }
  std::size_t size() const;
  std::size_t size(const std::string& key) const;
  std::vector<std::string> keys() const;

  /// Appends the entry (assigning id and timestamp); evicts the least recently
  /// used entry of that key when over the cap. Returns the assigned id.
  std::uint64_t insert(SynopsisEntry entry);

  /// Insertion-ordered entries of one key (empty for an unknown key).
  std::span<const SynopsisEntry> entries_for(const std::string& key) const;
  std::vector<SynopsisEntry>& mutable_entries(const std::string& key);

  /// Marks entries as used now.
  void touch(const std::string& key, std::span<const std::uint64_t> ids);
  /// Removes entries matching the predicate; returns how many.
  std::size_t remove_if(const std::string& key,
                        const std::function<bool(const SynopsisEntry&)>& pred);

  const std::optional<AttributeCatalog>& catalog() const noexcept { return catalog_; }
  void set_catalog(AttributeCatalog c) { catalog_ = std::move(c); }

  /// Trained parameters and the precomputed system, per key.
  struct Model {
    CorrelationParams params;
    std::shared_ptr<const TrainedSystem> system;  // may be null (params only)
  };
  const Model* model(const std::string& key) const;
  void set_model(const std::string& key, Model m);
  void clear_model_systems();
  const std::map<std::string, Model>& models() const noexcept { return models_; }

  std::vector<AppendEvent>& append_log() noexcept { return appends_; }
  const std::vector<AppendEvent>& append_log() const noexcept { return appends_; }

  /// JSON lines: a header (format version, catalog, models, append log), then one
  /// entry per line in key order, insertion order within a key.
  void save(const std::filesystem::path& path) const;
  /// Throws FormatError on a version mismatch or a corrupt line (with line number).
  static Synopsis load(const std::filesystem::path& path);

 private:
  std::size_t cap_;
  std::uint64_t clock_ = 0;
  std::uint64_t next_id_ = 1;
  std::map<std::string, std::vector<SynopsisEntry>> entries_;
  std::optional<AttributeCatalog> catalog_;
  std::map<std::string, Model> models_;
  std::vector<AppendEvent> appends_;
};

}  // namespace aqpl
