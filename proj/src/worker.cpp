#include "hierprobe/worker.hpp"

#include <cerrno>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include "hierprobe/error.hpp"
#include "parallel.hpp"

namespace hierprobe {

namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

std::string errno_text() { return std::strerror(errno); }

std::string clip(const std::string& s) { return s.size() > 80 ? s.substr(0, 80) + "..." : s; }

}  // namespace

WorkerSession::WorkerSession(const std::vector<std::string>& command, std::chrono::milliseconds timeout,
                             const std::filesystem::path& working_dir)
    : timeout_(timeout) {
  if (command.empty()) throw Error(ErrorCode::Config, "empty worker command");
  name_ = command.front();

  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    throw Error(ErrorCode::WorkerUnavailable, "socketpair: " + errno_text());
  }
  int errpipe[2];
  if (::pipe2(errpipe, O_CLOEXEC) != 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw Error(ErrorCode::WorkerUnavailable, "pipe: " + errno_text());
  }
  std::vector<char*> argv;
  for (const auto& arg : command) argv.push_back(const_cast<char*>(arg.c_str()));
  argv.push_back(nullptr);
  const std::string cwd = working_dir.string();

  pid_ = ::fork();
  if (pid_ < 0) {
    for (const int fd : {sv[0], sv[1], errpipe[0], errpipe[1]}) ::close(fd);
    throw Error(ErrorCode::WorkerUnavailable, "fork: " + errno_text());
  }
  if (pid_ == 0) {
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    if (cwd.empty() || ::chdir(cwd.c_str()) == 0) ::execvp(argv[0], argv.data());
    const int err = errno;
    [[maybe_unused]] const auto n = ::write(errpipe[1], &err, sizeof err);
    ::_exit(127);
  }
  ::close(sv[1]);
  ::close(errpipe[1]);
  int child_errno = 0;
  ssize_t got;
  do {
    got = ::read(errpipe[0], &child_errno, sizeof child_errno);
  } while (got < 0 && errno == EINTR);
  ::close(errpipe[0]);
  if (got == static_cast<ssize_t>(sizeof child_errno)) {
    ::close(sv[0]);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
    throw Error(ErrorCode::WorkerUnavailable, "cannot start '" + name_ + "': " + std::strerror(child_errno));
  }
  fd_ = sv[0];
  ::fcntl(fd_, F_SETFL, ::fcntl(fd_, F_GETFL) | O_NONBLOCK);
}

WorkerSession::~WorkerSession() {
  std::lock_guard lock(mutex_);
  shutdown(false);
}

bool WorkerSession::alive() const {
  std::lock_guard lock(mutex_);
  return fd_ >= 0;
}

void WorkerSession::shutdown(bool force) {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  if (pid_ <= 0) return;
  if (!force) {
    // Closing the socket is the worker's signal to exit.
    const auto deadline = Clock::now() + std::chrono::seconds(2);
    while (Clock::now() < deadline) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }
  ::kill(pid_, SIGKILL);
  ::waitpid(pid_, nullptr, 0);
  pid_ = -1;
}

void WorkerSession::fail_unavailable(const std::string& why) {
  shutdown(true);
  throw Error(ErrorCode::WorkerUnavailable, "worker '" + name_ + "' " + why);
}

void WorkerSession::send_all(const std::string& data, Clock::time_point deadline) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const auto n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n > 0) {
      sent += static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      pollfd p{fd_, POLLOUT, 0};
      const int r = ::poll(&p, 1, remaining_ms(deadline));
      if (r == 0) fail_unavailable("did not accept the request within the timeout");
      if (r < 0 && errno != EINTR) fail_unavailable("poll failed: " + errno_text());
      continue;
    }
    fail_unavailable("closed its input: " + errno_text());
  }
}

std::string WorkerSession::read_line(Clock::time_point deadline) {
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, remaining_ms(deadline));
    if (r == 0) {
      fail_unavailable("did not answer within " + std::to_string(timeout_.count()) + " ms");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      fail_unavailable("poll failed: " + errno_text());
    }
    char chunk[65536];
    const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n == 0) fail_unavailable("exited");
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK) continue;
      fail_unavailable("read failed: " + errno_text());
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

Json WorkerSession::call(Json request) {
  std::lock_guard lock(mutex_);
  if (fd_ < 0) throw Error(ErrorCode::WorkerUnavailable, "worker '" + name_ + "' session is closed");
  const std::int64_t id = next_id_++;
  request["id"] = id;
  const auto deadline = Clock::now() + timeout_;
  send_all(request.dump() + "\n", deadline);
  const std::string line = read_line(deadline);

  Json response;
  try {
    response = Json::parse(line);
  } catch (const Json::exception&) {
    shutdown(true);
    throw Error(ErrorCode::ProtocolViolation, "worker '" + name_ + "' wrote a non-JSON line: " + clip(line));
  }
  if (!response.is_object() || !response.contains("id")) {
    shutdown(true);
    throw Error(ErrorCode::ProtocolViolation, "worker '" + name_ + "' response lacks an id: " + clip(line));
  }
  const auto& rid = response.at("id");
  const bool echoes = rid.is_number_integer() && rid.get<std::int64_t>() == id;
  if (response.contains("error") && (echoes || rid.is_null())) {
    const auto& e = response.at("error");
    const std::string code = e.is_object() ? e.value("code", std::string("unknown")) : "unknown";
    const std::string message = e.is_object() ? e.value("message", std::string()) : e.dump();
    throw Error(ErrorCode::WorkerError, "worker '" + name_ + "' " + code + ": " + message);
  }
  if (!echoes) {
    shutdown(true);
    throw Error(ErrorCode::ProtocolViolation,
                "worker '" + name_ + "' answered id " + rid.dump() + " to request " + std::to_string(id));
  }
  return response;
}

// --- Backend ---------------------------------------------------------------

WorkerBackend::WorkerBackend(const WorkerOptions& options) : options_(options) {
  if (options_.sessions < 1) throw Error(ErrorCode::Config, "need at least one worker session");
  if (options_.chunk < 1) throw Error(ErrorCode::Config, "worker chunk size must be positive");
  for (std::size_t s = 0; s < options_.sessions; ++s) {
    sessions_.push_back(std::make_unique<WorkerSession>(options_.command, options_.timeout, options_.working_dir));
  }
  std::optional<protocol::WorkerSpec> first;
  for (auto& session : sessions_) {
    auto spec = protocol::parse_spec_response(session->call(protocol::spec_request(0)));
    if (!first) {
      first = std::move(spec);
      continue;
    }
    if (spec.space.dim != first->space.dim || spec.space.num_layers != first->space.num_layers ||
        spec.space.per_layer_dim != first->space.per_layer_dim || spec.concepts != first->concepts) {
      throw Error(ErrorCode::ProtocolViolation, "worker sessions disagree about the generator spec");
    }
  }
  space_ = first->space;
  space_.validate();
  if (first->transform) {
    transform_ = std::move(first->transform);
  } else {
    if (space_.per_layer_dim != space_.dim) {
      throw Error(ErrorCode::ProtocolViolation,
                  "worker has per_layer_dim != dim but sent no transform to map w to its layers");
    }
    transform_ = StyleTransform::broadcast(space_.num_layers, space_.dim);
  }
  if (transform_->num_layers() != space_.num_layers || transform_->per_layer_dim() != space_.per_layer_dim ||
      transform_->input_dim() != space_.dim) {
    throw Error(ErrorCode::ProtocolViolation, "worker transform does not match its declared dimensions");
  }
  try {
    catalog_.emplace(std::move(first->concepts));
  } catch (const Error& e) {
    throw Error(ErrorCode::ProtocolViolation, std::string("bad worker concept list: ") + e.what());
  }
  if (options_.scratch_dir.empty()) {
    scratch_ = std::filesystem::temp_directory_path() /
               ("hierprobe-worker-" + std::to_string(::getpid()) + "-" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    own_scratch_ = true;
  } else {
    scratch_ = options_.scratch_dir;
  }
}

WorkerBackend::~WorkerBackend() {
  if (own_scratch_) {
    std::error_code ec;
    std::filesystem::remove_all(scratch_, ec);
  }
}

template <class Fn>
void WorkerBackend::for_chunks(std::size_t n, Fn&& fn) const {
  const std::size_t chunk = options_.chunk;
  const std::size_t chunks = (n + chunk - 1) / chunk;
  const std::size_t s_count = std::min(sessions_.size(), std::max<std::size_t>(chunks, 1));
  detail::parallel_for(s_count, s_count, [&](std::size_t s) {
    for (std::size_t c = s; c < chunks; c += s_count) {
      const std::size_t begin = c * chunk;
      fn(*sessions_[s], begin, std::min(chunk, n - begin));
    }
  });
}

std::vector<ScoreVector> WorkerBackend::score(std::span<const LayerwiseCode> codes, const ConceptCatalog&) const {
  std::vector<ScoreVector> out(codes.size());
  for_chunks(codes.size(), [&](WorkerSession& session, std::size_t begin, std::size_t len) {
    auto scores = protocol::parse_score_response(session.call(protocol::score_request(0, codes.subspan(begin, len))));
    if (scores.size() != len) {
      throw Error(ErrorCode::ProtocolViolation, "worker returned " + std::to_string(scores.size()) +
                                                    " score maps for " + std::to_string(len) + " codes");
    }
    for (std::size_t k = 0; k < len; ++k) out[begin + k] = std::move(scores[k]);
  });
  return out;
}

std::vector<std::filesystem::path> WorkerBackend::generate_files(std::span<const LayerwiseCode> codes,
                                                                 const std::filesystem::path& out_dir) const {
  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::absolute(out_dir);
  std::vector<std::filesystem::path> out(codes.size());
  for_chunks(codes.size(), [&](WorkerSession& session, std::size_t begin, std::size_t len) {
    auto paths = protocol::parse_path_list(
        session.call(protocol::generate_request(0, codes.subspan(begin, len), dir)), "images");
    if (paths.size() != len) throw Error(ErrorCode::ProtocolViolation, "worker returned the wrong number of images");
    for (std::size_t k = 0; k < len; ++k) out[begin + k] = paths[k].is_absolute() ? paths[k] : dir / paths[k];
  });
  return out;
}

std::vector<ImageBuffer> WorkerBackend::generate(std::span<const LayerwiseCode> codes) const {
  std::filesystem::path dir;
  {
    std::lock_guard lock(scratch_mutex_);
    dir = scratch_ / ("batch-" + std::to_string(scratch_counter_++));
  }
  const auto paths = generate_files(codes, dir);
  std::vector<ImageBuffer> images;
  images.reserve(paths.size());
  for (const auto& p : paths) images.push_back(read_png(p));
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  return images;
}

std::vector<SegmentationMask> WorkerBackend::segment(std::span<const std::filesystem::path> images) const {
  if (images.empty()) throw Error(ErrorCode::EmptyBatch, "no images to segment");
  std::vector<std::filesystem::path> absolute;
  for (const auto& p : images) absolute.push_back(std::filesystem::absolute(p));
  std::vector<SegmentationMask> out(images.size());
  for_chunks(images.size(), [&](WorkerSession& session, std::size_t begin, std::size_t len) {
    const std::span<const std::filesystem::path> part(absolute.data() + begin, len);
    const auto masks = protocol::parse_path_list(session.call(protocol::segment_request(0, part)), "masks");
    if (masks.size() != len) throw Error(ErrorCode::ProtocolViolation, "worker returned the wrong number of masks");
    for (std::size_t k = 0; k < len; ++k) out[begin + k] = read_mask_png(masks[k]);
  });
  return out;
}

std::shared_ptr<WorkerBackend> start_worker(const WorkerOptions& options) {
  return std::make_shared<WorkerBackend>(options);
}

}  // namespace hierprobe
