#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <future>

#include "gdprkv/server.hpp"

namespace gdprkv {

namespace {

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

Server::Server(Store& store, std::string bind_address, std::uint16_t port)
    : store_(store), dispatcher_(store), bind_address_(std::move(bind_address)), port_(port) {}

Server::~Server() { stop(); }

void Server::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::IoError, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port_);
  if (::inet_pton(AF_INET, bind_address_.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorCode::BadConfig, "bad bind address '" + bind_address_ + "'");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 128) != 0) {
    std::string msg = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorCode::IoError, "cannot listen on " + bind_address_ + ":" + std::to_string(port_) + ": " + msg);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);

  running_ = true;
  executor_stop_ = false;
  executor_ = std::thread([this] { executor_loop(); });
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lock(conn_mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  for (auto& t : conn_threads_) {
    if (t.joinable()) t.join();
  }
  conn_threads_.clear();
  {
    std::lock_guard lock(queue_mu_);
    executor_stop_ = true;
  }
  queue_cv_.notify_all();
  if (executor_.joinable()) executor_.join();
  listen_fd_ = -1;
}

void Server::run_on_executor(std::function<void()> fn) {
  std::promise<void> done;
  auto fut = done.get_future();
  {
    std::lock_guard lock(queue_mu_);
    queue_.push_back([&] {
      try {
        fn();
        done.set_value();
      } catch (...) {
        done.set_exception(std::current_exception());
      }
    });
  }
  queue_cv_.notify_one();
  fut.get();
}

void Server::executor_loop() {
  const auto tick = std::chrono::milliseconds(std::max<std::uint32_t>(1, store_.config().lazy.tick_interval_ms));
  auto next_tick = std::chrono::steady_clock::now() + tick;
  std::unique_lock lock(queue_mu_);
  while (true) {
    queue_cv_.wait_until(lock, next_tick, [&] { return !queue_.empty() || executor_stop_; });
    if (executor_stop_ && queue_.empty()) break;
    if (!queue_.empty()) {
      auto job = std::move(queue_.front());
      queue_.pop_front();
      lock.unlock();
      job();
      lock.lock();
    }
    if (std::chrono::steady_clock::now() >= next_tick) {
      lock.unlock();
      try {
        store_.maintenance();
      } catch (const std::exception&) {
        // The store is fail-stop; clients see the error on their next command.
      }
      lock.lock();
      next_tick = std::chrono::steady_clock::now() + tick;
    }
  }
}

void Server::accept_loop() {
  while (running_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      break;
    }
    set_nodelay(fd);
    std::lock_guard lock(conn_mu_);
    if (!running_) {
      ::close(fd);
      break;
    }
    conn_fds_.push_back(fd);
    conn_threads_.emplace_back([this, fd] { connection_loop(fd); });
  }
}

void Server::connection_loop(int fd) {
  Session session;
  RequestParser parser;
  char buf[64 * 1024];
  bool open = true;
  while (open && running_) {
    ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    parser.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    std::string out;
    try {
      while (auto req = parser.next()) {
        Reply reply;
        run_on_executor([&] { reply = dispatcher_.dispatch(*req, session); });
        out += encode_reply(reply);
      }
    } catch (const Error& e) {
      out += encode_reply(Reply::error(e.code(), e.what()));
      open = false;
    }
    if (!out.empty() && !send_all(fd, out)) break;
  }
  std::lock_guard lock(conn_mu_);
  std::erase(conn_fds_, fd);
  ::close(fd);
}

std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos) throw Error(ErrorCode::BadConfig, "expected host:port, got '" + std::string(text) + "'");
  unsigned port = 0;
  auto ps = text.substr(colon + 1);
  auto [p, ec] = std::from_chars(ps.data(), ps.data() + ps.size(), port);
  if (ec != std::errc() || p != ps.data() + ps.size() || port == 0 || port > 65535) {
    throw Error(ErrorCode::BadConfig, "bad port in '" + std::string(text) + "'");
  }
  return {std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

Client Client::connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res);
  if (rc != 0) throw Error(ErrorCode::ConnectError, "cannot resolve " + host + ": " + ::gai_strerror(rc));
  int fd = -1;
  std::string last_error = "no address";
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    last_error = std::strerror(errno);
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw Error(ErrorCode::ConnectError, "cannot connect to " + host + ":" + std::to_string(port) + ": " + last_error);
  set_nodelay(fd);
  return Client(fd);
}

Client::Client(Client&& other) noexcept : fd_(other.fd_), parser_(std::move(other.parser_)) { other.fd_ = -1; }

Client& Client::operator=(Client&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = other.fd_;
    parser_ = std::move(other.parser_);
    other.fd_ = -1;
  }
  return *this;
}

Client::~Client() {
  if (fd_ >= 0) ::close(fd_);
}

void Client::send(const std::vector<Bytes>& args) {
  if (!send_all(fd_, encode_request(args))) {
    throw Error(ErrorCode::ConnectError, std::string("send failed: ") + std::strerror(errno));
  }
}

Reply Client::receive() {
  char buf[64 * 1024];
  while (true) {
    if (auto r = parser_.next()) return *r;
    ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(ErrorCode::ConnectError, "connection closed by server");
    parser_.feed(std::string_view(buf, static_cast<std::size_t>(n)));
  }
}

Reply Client::call(const std::vector<Bytes>& args) {
  send(args);
  return receive();
}

}  // namespace gdprkv
