#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <sys/types.h>

#include "hierprobe/generator.hpp"
#include "hierprobe/protocol.hpp"

namespace hierprobe {

inline constexpr std::chrono::milliseconds kDefaultWorkerTimeout{120000};

/// One worker subprocess speaking the line protocol on its stdin/stdout.
/// Requests are strictly serial; call() may be used from several threads.
class WorkerSession {
public:
  /// A non-empty `working_dir` becomes the child's current directory.
  WorkerSession(const std::vector<std::string>& command, std::chrono::milliseconds timeout,
                const std::filesystem::path& working_dir = {});
  ~WorkerSession();
  WorkerSession(const WorkerSession&) = delete;
  WorkerSession& operator=(const WorkerSession&) = delete;

  /// Sets the request id, sends it, and returns the matching response.
  /// Timeouts, exits and broken pipes raise WorkerUnavailable (the process is
  /// killed); malformed output raises ProtocolViolation; error objects raise
  /// WorkerError and leave the session usable.
  Json call(Json request);

  bool alive() const;
  pid_t pid() const noexcept { return pid_; }

private:
  void shutdown(bool force);
  [[noreturn]] void fail_unavailable(const std::string& why);
  void send_all(const std::string& data, std::chrono::steady_clock::time_point deadline);
  std::string read_line(std::chrono::steady_clock::time_point deadline);

  mutable std::mutex mutex_;
  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
  std::int64_t next_id_ = 1;
  std::chrono::milliseconds timeout_;
  std::string name_;
};

struct WorkerOptions {
  std::vector<std::string> command;
  std::chrono::milliseconds timeout = kDefaultWorkerTimeout;
  /// Parallel sessions; batches are split across them.
  std::size_t sessions = 1;
  /// Codes per score/generate request.
  std::size_t chunk = 256;
  /// Where generate requests write images; empty means a fresh temp directory.
  std::filesystem::path scratch_dir;
  /// Current directory of the worker processes; empty means inherit.
  std::filesystem::path working_dir;
};

class WorkerBackend final : public GeneratorBackend {
public:
  explicit WorkerBackend(const WorkerOptions& options);
  ~WorkerBackend() override;

  GeneratorKind kind() const override { return GeneratorKind::ExternalWorker; }
  const LatentSpaceSpec& space() const override { return space_; }
  const StyleTransform& transform() const override { return *transform_; }
  const ConceptCatalog& catalog() const override { return *catalog_; }

  std::vector<ScoreVector> score(std::span<const LayerwiseCode> codes, const ConceptCatalog& concepts) const override;
  std::vector<ImageBuffer> generate(std::span<const LayerwiseCode> codes) const override;

  /// Has the worker write images for `codes` into `out_dir`; returns their paths.
  std::vector<std::filesystem::path> generate_files(std::span<const LayerwiseCode> codes,
                                                    const std::filesystem::path& out_dir) const;
  std::vector<SegmentationMask> segment(std::span<const std::filesystem::path> images) const;

  std::size_t session_count() const noexcept { return sessions_.size(); }

private:
  template <class Fn>
  void for_chunks(std::size_t n, Fn&& fn) const;

  WorkerOptions options_;
  std::vector<std::unique_ptr<WorkerSession>> sessions_;
  LatentSpaceSpec space_;
  std::optional<StyleTransform> transform_;
  std::optional<ConceptCatalog> catalog_;
  std::filesystem::path scratch_;
  bool own_scratch_ = false;
  mutable std::mutex scratch_mutex_;
  mutable std::uint64_t scratch_counter_ = 0;
};

/// Starts the worker sessions and fetches the generator spec.
std::shared_ptr<WorkerBackend> start_worker(const WorkerOptions& options);

}  // namespace hierprobe
