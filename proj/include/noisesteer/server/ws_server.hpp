#pragma once
// WebSocket front end for a Session. One io_context thread serves every
// connection, so the session is only ever touched from that thread.
//
// Each client opens with {"v":1,"type":"hello","role":"controller"|"observer"}.
// At most one controller is admitted; observers only receive frames. After any
// accepted control message the current frame is broadcast to all clients.

#include <cstdint>
#include <memory>
#include <string>

#include "noisesteer/server/session.hpp"

namespace noisesteer::server {

class InteractServer {
 public:
  /// `bind` is "host:port"; port 0 picks a free port.
  InteractServer(Session& session, const std::string& bind);
  ~InteractServer();
  InteractServer(const InteractServer&) = delete;
  InteractServer& operator=(const InteractServer&) = delete;

  std::uint16_t port() const;
  /// Serves until stop() is called or the session completes and `exit_on_complete` is set.
  void run(bool exit_on_complete = false);
  /// Thread-safe.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace noisesteer::server
