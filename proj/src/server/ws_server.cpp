#include "noisesteer/server/ws_server.hpp"

#include <deque>
#include <set>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "noisesteer/errors.hpp"

namespace noisesteer::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace ws = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

enum class Role { pending, controller, observer };

}  // namespace

struct InteractServer::Impl {
  struct Conn : std::enable_shared_from_this<Conn> {
    Conn(tcp::socket s, Impl& o) : stream(std::move(s)), owner(o) {}

    void start() {
      stream.set_option(ws::stream_base::timeout::suggested(beast::role_type::server));
      stream.async_accept([self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->owner.conns.insert(self);
        self->read();
      });
    }

    void read() {
      stream.async_read(buf, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->owner.drop(self);
          return;
        }
        const auto text = beast::buffers_to_string(self->buf.data());
        self->buf.consume(self->buf.size());
        self->owner.on_message(self, text);
        if (self->alive) self->read();
      });
    }

    void send(std::string msg) {
      if (!alive) return;
      queue.push_back(std::move(msg));
      if (queue.size() == 1) write_next();
    }

    void write_next() {
      stream.text(true);
      stream.async_write(asio::buffer(queue.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->owner.drop(self);
          return;
        }
        self->queue.pop_front();
        if (!self->queue.empty()) {
          self->write_next();
        } else if (self->closing) {
          self->close();
        }
      });
    }

    void close() {
      if (!alive) return;
      if (!queue.empty()) {
        closing = true;
        return;
      }
      alive = false;
      stream.async_close(ws::close_code::normal, [self = shared_from_this()](beast::error_code) {
        self->owner.drop(self);
      });
    }

    ws::stream<beast::tcp_stream> stream;
    Impl& owner;
    beast::flat_buffer buf;
    std::deque<std::string> queue;
    Role role = Role::pending;
    bool alive = true;
    bool closing = false;
  };

  Impl(Session& s, const std::string& bind) : session(s), acceptor(ioc) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw ConfigError("bind address must be host:port, got '" + bind + "'");
    const auto host = bind.substr(0, colon);
    unsigned long requested = 0;
    try {
      requested = std::stoul(bind.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad port in bind address '" + bind + "'");
    }
    if (requested > 65535) throw ConfigError("bad port in bind address '" + bind + "'");
    beast::error_code ec;
    const auto addr = asio::ip::make_address(host.empty() ? "0.0.0.0" : host, ec);
    if (ec) throw ConfigError("bad host in bind address '" + bind + "'");
    const tcp::endpoint ep(addr, static_cast<std::uint16_t>(requested));
    acceptor.open(ep.protocol());
    acceptor.set_option(asio::socket_base::reuse_address(true));
    acceptor.bind(ep, ec);
    if (ec) throw ConfigError("cannot bind " + bind + ": " + ec.message());
    acceptor.listen();
    port = acceptor.local_endpoint().port();
  }

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket sock) {
      if (ec) return;
      std::make_shared<Conn>(std::move(sock), *this)->start();
      accept();
    });
  }

  void drop(const std::shared_ptr<Conn>& c) {
    c->alive = false;
    if (controller == c) controller.reset();
    conns.erase(c);
  }

  void broadcast(const Message& m) {
    const auto text = m.dump();
    for (const auto& c : conns) {
      if (c->role != Role::pending) c->send(text);
    }
  }

  void on_message(const std::shared_ptr<Conn>& c, const std::string& text) {
    Message msg;
    try {
      msg = Message::parse(text);
    } catch (const std::exception&) {
      c->send(Session::reject("malformed", "not valid JSON", session.seq()).dump());
      return;
    }
    if (c->role == Role::pending) {
      hello(c, msg);
      return;
    }
    if (c->role == Role::observer) {
      c->send(Session::reject("observer_read_only", "observers cannot send control messages", session.seq()).dump());
      return;
    }
    const auto reply = session.handle(msg);
    c->send(reply.dump());
    if (reply.value("type", "") != "reject") broadcast(session.frame());
    if (session.complete() && exit_on_complete) finish();
  }

  void hello(const std::shared_ptr<Conn>& c, const Message& msg) {
    if (!msg.is_object() || msg.value("type", "") != "hello" || !msg.contains("role") || !msg["role"].is_string()) {
      c->send(Session::reject("malformed", "expected hello with a role", session.seq()).dump());
      return;
    }
    if (!msg.contains("v") || !msg["v"].is_number_integer() || msg["v"].get<int>() != kSchemaVersion) {
      c->send(Session::reject("unsupported_version", "schema version must be " + std::to_string(kSchemaVersion)).dump());
      return;
    }
    const auto role = msg["role"].get<std::string>();
    if (role == "controller") {
      if (controller) {
        c->send(Session::reject("controller_taken", "another controller is connected").dump());
        return;
      }
      controller = c;
      c->role = Role::controller;
    } else if (role == "observer") {
      c->role = Role::observer;
    } else {
      c->send(Session::reject("malformed", "role must be controller or observer").dump());
      return;
    }
    c->send(Message{{"v", kSchemaVersion}, {"type", "welcome"}, {"session", session.id()}, {"role", role}}.dump());
    c->send(session.frame().dump());
  }

  void finish() {
    beast::error_code ec;
    acceptor.close(ec);
    const auto all = conns;
    for (const auto& c : all) c->close();
  }

  Session& session;
  asio::io_context ioc{1};
  tcp::acceptor acceptor;
  std::set<std::shared_ptr<Conn>> conns;
  std::shared_ptr<Conn> controller;
  bool exit_on_complete = false;
  std::uint16_t port = 0;
};

InteractServer::InteractServer(Session& session, const std::string& bind)
    : impl_(std::make_unique<Impl>(session, bind)) {}

InteractServer::~InteractServer() = default;

std::uint16_t InteractServer::port() const { return impl_->port; }

void InteractServer::run(bool exit_on_complete) {
  impl_->exit_on_complete = exit_on_complete;
  impl_->accept();
  impl_->ioc.run();
  impl_->conns.clear();
  impl_->controller.reset();
}

void InteractServer::stop() { impl_->ioc.stop(); }

}  // namespace noisesteer::server
