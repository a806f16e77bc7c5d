#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "gdprkv/protocol.hpp"
#include "gdprkv/store.hpp"

namespace gdprkv {

struct Session {
  std::string actor;
  bool authenticated = false;
};

/// Maps protocol commands onto store operations.
///
///   AUTH actor secret
///   PUT key value [purpose=] [owner=] [purposes=a,b] [objections=] [recipients=]
///       [origin=] [regions=] [expiry=<abs us>] [ttl_ms=<ms>]
///   GET key purpose=p              GETMETA key purpose=p
///   DEL key                        TTLSET key <abs us>       TTLCLEAR key
///   OBJECT subject purpose
///   GRANT actor ops=read,write purposes=a,b [valid_until=<abs us>]
///   REVOKE actor
///   SUBJACCESS subject             SUBJEXPORT subject        SUBJFORGET subject
///   AUDITQ [subject=] [key=] [actor=] [from=] [to=]
///   COMPACT                        INFO
class Dispatcher {
 public:
  explicit Dispatcher(Store& store) : store_(store) {}

  Reply dispatch(const std::vector<Bytes>& args, Session& session);
  /// Metrics followed by the configuration echo.
  std::string info() const;

 private:
  Reply execute(const std::string& name, const std::vector<Bytes>& args, Session& session);

  Store& store_;
};

/// Constant-time comparison of the SHA-256 digests of both strings.
bool secrets_match(std::string_view expected, std::string_view given);

/// TCP front end. Each connection gets its own thread that decodes
/// requests and hands them, in order, to one executor thread which owns
/// the store. The executor also runs store maintenance between commands.
class Server {
 public:
  Server(Store& store, std::string bind_address, std::uint16_t port);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting. Port 0 picks a free port.
  void start();
  void stop();
  std::uint16_t port() const { return port_; }

  /// Runs `fn` on the executor thread and waits for it.
  void run_on_executor(std::function<void()> fn);

 private:
  void accept_loop();
  void connection_loop(int fd);
  void executor_loop();

  Store& store_;
  Dispatcher dispatcher_;
  std::string bind_address_;
  std::uint16_t port_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};

  std::thread acceptor_;
  std::thread executor_;

  std::mutex conn_mu_;
  std::list<std::thread> conn_threads_;
  std::vector<int> conn_fds_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<std::function<void()>> queue_;
  bool executor_stop_ = false;
};

/// Blocking client. `call` sends one request and waits for the reply;
/// `send` plus `receive` allow pipelining.
class Client {
 public:
  /// Throws `Error(ConnectError)`.
  static Client connect(const std::string& host, std::uint16_t port);
  Client(Client&& other) noexcept;
  Client& operator=(Client&& other) noexcept;
  ~Client();

  Reply call(const std::vector<Bytes>& args);
  void send(const std::vector<Bytes>& args);
  Reply receive();

 private:
  explicit Client(int fd) : fd_(fd) {}
  int fd_ = -1;
  ReplyParser parser_;
};

/// Splits "host:port".
std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view text);

}  // namespace gdprkv
