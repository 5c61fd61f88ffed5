#include "de/control.hpp"

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cstring>

#include "de/errors.hpp"

namespace de {

namespace {

int connect_unix(const std::filesystem::path& path) {
  int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0) raise(Errc::io_error, "socket: " + std::string(std::strerror(errno)));
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  std::strncpy(addr.sun_path, path.c_str(), sizeof(addr.sun_path) - 1);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    raise(Errc::io_error, "connect " + path.string() + ": " + std::strerror(errno));
  }
  return fd;
}

std::string read_line(int fd) {
  std::string line;
  char c;
  while (true) {
    ssize_t n = ::read(fd, &c, 1);
    if (n <= 0) break;
    if (c == '\n') break;
    line += c;
  }
  return line;
}

void write_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    ssize_t n = ::write(fd, data.data() + sent, data.size() - sent);
    if (n <= 0) break;
    sent += static_cast<std::size_t>(n);
  }
}

}  // namespace

ControlServer::ControlServer(Engine& engine, std::filesystem::path socket_path)
    : engine_(engine), socket_path_(std::move(socket_path)) {
  std::filesystem::remove(socket_path_);
  if (socket_path_.has_parent_path())
    std::filesystem::create_directories(socket_path_.parent_path());
  listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (listen_fd_ < 0) raise(Errc::io_error, "socket: " + std::string(std::strerror(errno)));
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  std::strncpy(addr.sun_path, socket_path_.c_str(), sizeof(addr.sun_path) - 1);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listen_fd_, 8) != 0) {
    ::close(listen_fd_);
    raise(Errc::io_error, "bind " + socket_path_.string() + ": " + std::strerror(errno));
  }
  thread_ = std::thread([this] { serve(); });
}

ControlServer::~ControlServer() { close(); }

void ControlServer::close() {
  if (stopping_.exchange(true)) return;
  // Wake the accept loop with a throwaway connection; a blocked accept is
  // not interrupted by closing the listening socket.
  try {
    int fd = connect_unix(socket_path_);
    ::close(fd);
  } catch (const Error&) {
  }
  if (thread_.joinable()) thread_.join();
  ::close(listen_fd_);
  std::filesystem::remove(socket_path_);
}

void ControlServer::serve() {
  while (true) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (stopping_.load()) {
      if (fd >= 0) ::close(fd);
      break;
    }
    if (fd < 0) break;
    std::string line = read_line(fd);
    Value reply;
    try {
      Value request = Value::parse(line);
      reply = handle(request);
    } catch (const std::exception& e) {
      reply = Value{{"ok", false}, {"error", e.what()}};
    }
    write_all(fd, reply.dump() + "\n");
    ::close(fd);
  }
}

Value ControlServer::handle(const Value& request) {
  std::string cmd = request.value("cmd", "");
  if (cmd == "shutdown") {
    shutdown_.store(true);
    return Value{{"ok", true}};
  }
  if (cmd == "list") {
    return Value{{"ok", true}, {"channels", engine_.channel_ids()}};
  }
  std::string channel = request.value("channel", "");
  if (!engine_.has_channel(channel))
    return Value{{"ok", false}, {"error", "no channel '" + channel + "'"}};
  try {
    ChannelStatus status;
    if (cmd == "status") status = engine_.status(channel);
    else if (cmd == "up") status = engine_.up(channel);
    else if (cmd == "down") status = engine_.down(channel);
    else return Value{{"ok", false}, {"error", "unknown command '" + cmd + "'"}};
    return Value{{"ok", true}, {"status", status.to_json()}};
  } catch (const Error& e) {
    return Value{{"ok", false}, {"error", e.what()}};
  }
}

Value control_request(const std::filesystem::path& socket_path, const Value& request) {
  int fd = connect_unix(socket_path);
  write_all(fd, request.dump() + "\n");
  std::string line = read_line(fd);
  ::close(fd);
  if (line.empty()) raise(Errc::io_error, "empty reply from control socket");
  return Value::parse(line);
}

}  // namespace de
