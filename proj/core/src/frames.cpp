// SPDX-License-Identifier: Apache-2.0

#include "haven/frames.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "haven/digest.hpp"

namespace haven {

namespace fs = std::filesystem;

namespace {

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".webp" || ext == ".gif";
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

}  // namespace

std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

fs::path DirectoryFrameSource::frame_dir(const Question& q) const {
  fs::path direct = root_ / q.video_ref;
  if (fs::is_directory(direct)) return direct;
  fs::path stem = root_ / fs::path(q.video_ref).parent_path() / fs::path(q.video_ref).stem();
  if (fs::is_directory(stem)) return stem;
  throw Error("no frame directory for video '" + q.video_ref + "' under " + root_.string());
}

std::vector<fs::path> DirectoryFrameSource::list(const Question& q) const {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(frame_dir(q))) {
    if (entry.is_regular_file() && is_image(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::size_t DirectoryFrameSource::total_frames(const Question& q) const {
  const auto n = list(q).size();
  if (n == 0) throw Error("frame directory for '" + q.video_ref + "' is empty");
  return n;
}

ImagePayload DirectoryFrameSource::load_frame(const Question& q, std::size_t index,
                                              const SamplingConfig&) const {
  const auto files = list(q);
  if (index >= files.size()) {
    throw DomainError("frame index " + std::to_string(index) + " out of range for '" + q.video_ref + "'");
  }
  return {read_file_bytes(files[index]), mime_for_path(files[index].string())};
}

CommandFrameSource::CommandFrameSource(std::string command_template, fs::path work_dir)
    : template_(std::move(command_template)), work_dir_(std::move(work_dir)) {
  if (template_.find("{output}") == std::string::npos) {
    throw ConfigError("frame command template must contain {output}");
  }
}

std::size_t CommandFrameSource::total_frames(const Question& q) const {
  if (q.frame_count == 0) {
    throw DomainError("question " + q.id + " has frame_count 0; command extraction needs a frame count");
  }
  return q.frame_count;
}

ImagePayload CommandFrameSource::load_frame(const Question& q, std::size_t index,
                                            const SamplingConfig& sampling) const {
  const fs::path out = work_dir_ / (digest_hex(q.video_ref) + "_" + std::to_string(index) + ".jpg");
  fs::create_directories(work_dir_);
  if (!fs::exists(out)) {
    std::string cmd = template_;
    cmd = replace_all(cmd, "{video}", shell_quote(q.video_ref));
    cmd = replace_all(cmd, "{index}", std::to_string(index));
    cmd = replace_all(cmd, "{output}", shell_quote(out.string()));
    cmd = replace_all(cmd, "{long_edge}",
                      sampling.resize_long_edge_px ? std::to_string(*sampling.resize_long_edge_px) : "");
    const int rc = std::system(cmd.c_str());
    if (rc != 0 || !fs::exists(out)) {
      throw Error("frame extractor failed (exit " + std::to_string(rc) + ") for '" + q.video_ref +
                  "' frame " + std::to_string(index));
    }
  }
  return {read_file_bytes(out), "image/jpeg"};
}

std::vector<ImagePayload> gather_frames(const FrameSource& source, const Question& q,
                                        const SamplingConfig& sampling) {
  std::vector<ImagePayload> frames;
  for (std::size_t idx : plan_frame_indices(source.total_frames(q), sampling.n_frames)) {
    frames.push_back(source.load_frame(q, idx, sampling));
  }
  return frames;
}

}  // namespace haven
