// SPDX-License-Identifier: Apache-2.0
//
// Frame sources. Video decoding happens outside haven: frames are either
// pre-extracted into a directory per video or produced on demand by an
// external command.

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "haven/dataset.hpp"
#include "haven/model_client.hpp"

namespace haven {

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::size_t total_frames(const Question& q) const = 0;
  virtual ImagePayload load_frame(const Question& q, std::size_t index,
                                  const SamplingConfig& sampling) const = 0;
};

// Frames for video_ref "clips/a.mp4" live in {root}/clips/a.mp4/ or, failing
// that, {root}/clips/a/, as image files ordered by filename.
class DirectoryFrameSource final : public FrameSource {
 public:
  explicit DirectoryFrameSource(std::filesystem::path root) : root_(std::move(root)) {}

  std::size_t total_frames(const Question& q) const override;
  ImagePayload load_frame(const Question& q, std::size_t index,
                          const SamplingConfig& sampling) const override;
  std::filesystem::path frame_dir(const Question& q) const;

 private:
  std::vector<std::filesystem::path> list(const Question& q) const;
  std::filesystem::path root_;
};

// Runs a shell command template per frame. Placeholders: {video}, {index},
// {output}, {long_edge} (empty when no resize is configured). The command must
// write the frame image to {output}. Total frame count comes from the
// question's frame_count.
class CommandFrameSource final : public FrameSource {
 public:
  CommandFrameSource(std::string command_template, std::filesystem::path work_dir);

  std::size_t total_frames(const Question& q) const override;
  ImagePayload load_frame(const Question& q, std::size_t index,
                          const SamplingConfig& sampling) const override;

 private:
  std::string template_;
  std::filesystem::path work_dir_;
};

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

// Plans indices with plan_frame_indices and loads each frame in order.
std::vector<ImagePayload> gather_frames(const FrameSource& source, const Question& q,
                                        const SamplingConfig& sampling);

}  // namespace haven
