#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <thread>

#include "de/engine.hpp"
#include "de/value.hpp"

namespace de {

// Line-delimited JSON over a local unix socket; the minimal admin surface
// for a running engine. One JSON object per request line, one per reply.
//
//   {"cmd":"status","channel":"x"}   -> {"ok":true,"status":{...}}
//   {"cmd":"up","channel":"x"}       -> {"ok":true,"status":{...}}
//   {"cmd":"down","channel":"x"}     -> {"ok":true,"status":{...}}
//   {"cmd":"list"}                   -> {"ok":true,"channels":[...]}
//   {"cmd":"shutdown"}               -> {"ok":true}
class ControlServer {
 public:
  ControlServer(Engine& engine, std::filesystem::path socket_path);
  ~ControlServer();

  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  const std::filesystem::path& socket_path() const { return socket_path_; }
  bool shutdown_requested() const { return shutdown_.load(); }
  void close();

 private:
  void serve();
  Value handle(const Value& request);

  Engine& engine_;
  std::filesystem::path socket_path_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> shutdown_{false};
  std::thread thread_;
};

// One-shot client call: connect, send the request line, read the reply.
Value control_request(const std::filesystem::path& socket_path, const Value& request);

}  // namespace de
