// SPDX-License-Identifier: Apache-2.0

#include "haven/record_cache.hpp"

#include <cctype>
#include <fstream>
#include <mutex>

namespace haven {

namespace {

std::string shard_dir_name(const std::string& model_name) {
  std::string out;
  for (char c : model_name) {
    const bool safe = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out += safe ? c : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

}  // namespace

RecordCache::RecordCache(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path RecordCache::shard_path(const std::string& model_name) const {
  return root_ / shard_dir_name(model_name) / "records.jsonl";
}

void RecordCache::load_shard_locked(const std::string& model_name) const {
  if (loaded_[model_name]) return;
  loaded_[model_name] = true;
  std::ifstream in(shard_path(model_name));
  if (!in) return;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    InferenceRecord r;
    try {
      r = record_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      // A torn final line from an interrupted run is skipped; anything else is corruption.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw IntegrityError(shard_path(model_name).string() + " line " + std::to_string(n) + ": " +
                           e.what());
    }
    index_.try_emplace({r.model_name, r.question_id, r.sampling_digest}, std::move(r));
  }
}

std::optional<InferenceRecord> RecordCache::find(const std::string& model_name,
                                                 const std::string& question_id,
                                                 const std::string& sampling_digest) const {
  {
    std::shared_lock lock(mu_);
    auto loaded = loaded_.find(model_name);
    if (loaded != loaded_.end() && loaded->second) {
      auto it = index_.find({model_name, question_id, sampling_digest});
      if (it == index_.end()) return std::nullopt;
      return it->second;
    }
  }
  std::unique_lock lock(mu_);
  load_shard_locked(model_name);
  auto it = index_.find({model_name, question_id, sampling_digest});
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool RecordCache::put(const InferenceRecord& record) {
  std::unique_lock lock(mu_);
  load_shard_locked(record.model_name);
  Key key{record.model_name, record.question_id, record.sampling_digest};
  if (index_.contains(key)) return false;

  const auto path = shard_path(record.model_name);
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot append to " + path.string());
  out << to_json(record).dump() << '\n';
  out.flush();
  if (!out) throw Error("write failed for " + path.string());
  index_.emplace(std::move(key), record);
  return true;
}

std::vector<InferenceRecord> RecordCache::records(const std::string& model_name) const {
  std::unique_lock lock(mu_);
  load_shard_locked(model_name);
  std::vector<InferenceRecord> out;
  for (const auto& [key, rec] : index_) {
    if (std::get<0>(key) == model_name) out.push_back(rec);
  }
  return out;
}

}  // namespace haven
