// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

#include "haven/model_client.hpp"

namespace haven {

// On-disk inference cache: one append-only JSONL shard per model at
// {root}/{model_name}/records.jsonl. Concurrent readers, serialised writers;
// a record is never rewritten once stored.
class RecordCache {
 public:
  explicit RecordCache(std::filesystem::path root);

  std::optional<InferenceRecord> find(const std::string& model_name, const std::string& question_id,
                                      const std::string& sampling_digest) const;
  // No-op (returns false) if the key already exists.
  bool put(const InferenceRecord& record);

  std::vector<InferenceRecord> records(const std::string& model_name) const;
  std::filesystem::path shard_path(const std::string& model_name) const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  using Key = std::tuple<std::string, std::string, std::string>;
  void load_shard_locked(const std::string& model_name) const;

  std::filesystem::path root_;
  mutable std::shared_mutex mu_;
  mutable std::map<std::string, bool> loaded_;
  mutable std::map<Key, InferenceRecord> index_;
};

}  // namespace haven
