#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <exception>
#include <fstream>
#include <istream>
#include <mutex>
#include <sstream>
#include <thread>

#include "kernels.hpp"
#include "net.hpp"
#include "plan_table.hpp"

namespace intradp {

struct BandwidthSample {
  double t = 0.0;
  double mbps = 0.0;
};

/// Measured bandwidth over time; step-interpolated.
class BandwidthTrace {
 public:
  BandwidthTrace() = default;
  explicit BandwidthTrace(std::vector<BandwidthSample> s) : samples_(std::move(s)) {
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (samples_[i].mbps < 0 || std::isnan(samples_[i].mbps)) {
        throw Error(Errc::SchemaViolation, "negative bandwidth in trace");
      }
      if (i > 0 && !(samples_[i].t > samples_[i - 1].t)) {
        throw Error(Errc::SchemaViolation, "trace times must be strictly increasing");
      }
    }
  }

  /// Parses `t_seconds,bandwidth_mbps` lines; '#' comments and a header row are skipped.
  static BandwidthTrace parse(std::istream& in) {
    std::vector<BandwidthSample> s;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) {
        throw Error(Errc::SchemaViolation, "trace line " + std::to_string(lineno) + " lacks a comma");
      }
      try {
        s.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
      } catch (const std::invalid_argument&) {
        if (s.empty() && lineno == 1) continue;  // header
        throw Error(Errc::SchemaViolation, "trace line " + std::to_string(lineno) + " is not numeric");
      }
    }
    return BandwidthTrace(std::move(s));
  }

  static BandwidthTrace load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(Errc::FileNotFound, path);
    return parse(f);
  }

  bool empty() const { return samples_.empty(); }
  const std::vector<BandwidthSample>& samples() const { return samples_; }

  double at(double t) const {
    if (samples_.empty()) throw Error(Errc::EmptyTrace, "bandwidth trace has no samples");
    auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                               [](double x, const BandwidthSample& s) { return x < s.t; });
    if (it == samples_.begin()) return samples_.front().mbps;
    return std::prev(it)->mbps;
  }

 private:
  std::vector<BandwidthSample> samples_;
};

inline double estimate_bandwidth(const BandwidthTrace& trace, double now) { return trace.at(now); }

namespace detail {

inline Errc errc_from_text(const std::string& what) {
  const auto colon = what.find(':');
  const std::string name = what.substr(0, colon);
  for (int c = 0; c <= static_cast<int>(Errc::InvalidArgument); ++c) {
    if (to_string(static_cast<Errc>(c)) == name) return static_cast<Errc>(c);
  }
  return Errc::ProtocolViolation;
}

inline std::string strip_code(const std::string& what) {
  const auto colon = what.find(": ");
  return colon == std::string::npos ? what : what.substr(colon + 2);
}

}  // namespace detail

/// A framed, full-duplex session: a sender thread paces outbound UNITS
/// payloads, a receiver thread queues inbound frames, and the caller's
/// thread computes.
class Connection {
 public:
  Connection(net::Socket s, double throttle_mbps)
      : sock_(std::move(s)), bucket_(throttle_mbps) {
    sender_ = std::thread([this] { send_loop(); });
    receiver_ = std::thread([this] { recv_loop(); });
  }
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  ~Connection() { close(); }

  void close() {
    {
      std::lock_guard lk(mu_);
      if (closed_) return;
      closed_ = true;
      stopping_ = true;
    }
    out_cv_.notify_all();
    if (sender_.joinable()) sender_.join();
    sock_.shutdown();
    if (receiver_.joinable()) receiver_.join();
    sock_.close();
  }

  void set_deadline(net::Clock::time_point d) { deadline_.store(d.time_since_epoch().count()); }

  void send(wire::Frame f) {
    {
      std::lock_guard lk(mu_);
      rethrow_locked();
      outbox_.push_back(std::move(f));
    }
    out_cv_.notify_all();
  }

  /// Blocks until every queued frame has left the socket.
  void flush(net::Clock::time_point deadline) {
    std::unique_lock lk(mu_);
    if (!out_cv_.wait_until(lk, deadline, [&] { return (outbox_.empty() && !sending_) || error_; })) {
      throw Error(Errc::Timeout, "send queue did not drain");
    }
    rethrow_locked();
  }

  /// Next inbound frame. Throws Timeout past `deadline`, ConnectionLost on EOF.
  wire::Frame recv(net::Clock::time_point deadline) {
    std::unique_lock lk(mu_);
    const bool ok = in_cv_.wait_until(lk, deadline, [&] { return !inbox_.empty() || eof_ || error_; });
    if (!inbox_.empty()) {
      wire::Frame f = std::move(inbox_.front());
      inbox_.pop_front();
      return f;
    }
    rethrow_locked();
    if (eof_) throw Error(Errc::ConnectionLost, "peer closed the connection");
    if (!ok) throw Error(Errc::Timeout, "no frame before the deadline");
    throw Error(Errc::ConnectionLost, "receive failed");
  }

  std::uint64_t units_bytes_sent() const { return tx_units_.load(); }
  std::uint64_t units_bytes_received() const { return rx_units_.load(); }
  void reset_counters() {
    tx_units_ = 0;
    rx_units_ = 0;
  }

 private:
  void rethrow_locked() {
    if (error_) std::rethrow_exception(error_);
  }

  void fail(std::exception_ptr e) {
    {
      std::lock_guard lk(mu_);
      if (!error_) error_ = e;
    }
    in_cv_.notify_all();
    out_cv_.notify_all();
  }

  net::Clock::time_point deadline() const {
    return net::Clock::time_point(net::Clock::duration(deadline_.load()));
  }

  // Waits for the pacing slot in short slices so close() stays responsive.
  void pace(std::size_t bytes) {
    if (bucket_.unlimited() || bytes == 0) return;
    const auto limit = deadline();
    const auto target = bucket_.reserve(bytes);
    for (;;) {
      const auto now = net::Clock::now();
      if (target > limit && now >= limit) throw Error(Errc::Timeout, "throttled send missed the deadline");
      if (now >= target) return;
      {
        std::lock_guard lk(mu_);
        if (stopping_) throw Error(Errc::ConnectionLost, "connection closing");
      }
      std::this_thread::sleep_until(std::min({target, limit, now + std::chrono::milliseconds(20)}));
    }
  }

  void send_loop() {
    try {
      for (;;) {
        wire::Frame f;
        {
          std::unique_lock lk(mu_);
          out_cv_.wait(lk, [&] { return !outbox_.empty() || stopping_; });
          if (outbox_.empty()) return;
          f = std::move(outbox_.front());
          outbox_.pop_front();
          sending_ = true;
        }
        const auto header = wire::encode_header(f);
        net::send_all(sock_, header);
        if (f.type == wire::MsgType::Units) {
          constexpr std::size_t chunk = 16 * 1024;
          std::span<const std::uint8_t> body(f.payload);
          for (std::size_t off = 0; off < body.size(); off += chunk) {
            const std::size_t n = std::min(chunk, body.size() - off);
            pace(n);
            net::send_all(sock_, body.subspan(off, n));
          }
          tx_units_ += f.payload.size();
        } else {
          net::send_all(sock_, f.payload);
        }
        {
          std::lock_guard lk(mu_);
          sending_ = false;
        }
        out_cv_.notify_all();
      }
    } catch (...) {
      {
        std::lock_guard lk(mu_);
        sending_ = false;
      }
      fail(std::current_exception());
    }
  }

  void recv_loop() {
    try {
      for (;;) {
        auto f = net::read_frame(sock_, net::Clock::time_point::max());
        if (!f) break;
        if (f->type == wire::MsgType::Units) rx_units_ += f->payload.size();
        {
          std::lock_guard lk(mu_);
          inbox_.push_back(std::move(*f));
        }
        in_cv_.notify_all();
      }
    } catch (const Error& e) {
      bool closing;
      {
        std::lock_guard lk(mu_);
        closing = stopping_;
      }
      if (!closing || e.code() == Errc::ProtocolViolation) fail(std::current_exception());
    } catch (...) {
      fail(std::current_exception());
    }
    {
      std::lock_guard lk(mu_);
      eof_ = true;
    }
    in_cv_.notify_all();
  }

  net::Socket sock_;
  net::TokenBucket bucket_;
  std::atomic<net::Clock::rep> deadline_{net::Clock::time_point::max().time_since_epoch().count()};
  std::mutex mu_;
  std::condition_variable in_cv_, out_cv_;
  std::deque<wire::Frame> outbox_, inbox_;
  bool sending_ = false;
  bool stopping_ = false;
  bool closed_ = false;
  bool eof_ = false;
  std::exception_ptr error_;
  std::atomic<std::uint64_t> tx_units_{0}, rx_units_{0};
  std::thread sender_, receiver_;
};

inline wire::Frame error_frame(const std::string& what) {
  wire::Frame f;
  f.type = wire::MsgType::Error;
  f.payload = wire::pack_text(what);
  return f;
}

[[noreturn]] inline void raise_remote(const wire::Frame& f) {
  const std::string what = wire::unpack_text(f.payload);
  throw Error(detail::errc_from_text(what), "peer reported: " + detail::strip_code(what));
}

namespace detail {

// One side of a request: computes its own batches in topological order as
// soon as their inputs are present and ships the units the peer lacks right
// after producing them. The device and the server both run this loop.
class SideExecutor {
 public:
  SideExecutor(Device me, const ModelGraph& g, const Weights& w, const SchedulePlan& plan, std::uint32_t plan_id,
               Connection& conn, net::Clock::time_point deadline)
      : me_(me), g_(g), w_(w), plan_(plan), plan_id_(plan_id), conn_(conn), deadline_(deadline),
        local_(g.size()), received_(g.size()) {}

  /// Runs the side; on M returns the assembled model output.
  std::optional<Tensor> run(const Tensor* input) {
    for (auto v : g_.topo_order()) {
      const UnitRange x = plan_.range(me_, v);
      if (v == g_.input_index()) {
        if (me_ == Device::M) local_[v].push_back(whole(*input));
      } else if (!x.empty()) {
        std::vector<TensorPart> ins;
        for (auto u : g_.parents(v)) {
          const UnitRange need = g_.needed_from_parent(u, v, x);
          ins.push_back(gather(u, need));
        }
        local_[v].push_back(apply_range(g_, v, w_, ins, x));
      }
      ship(v);
    }
    if (me_ != Device::M) return std::nullopt;
    const auto out = g_.output_index();
    TensorPart all = assemble(local_[out], g_.node(out).full_out(), g_.node(out).unit_width);
    return Tensor{std::move(all.values), all.width};
  }

  bool saw_done() const { return done_; }

 private:
  void ship(std::size_t u) {
    for (auto v : g_.children(u)) {
      for (const auto& r : missing_units(g_, plan_, other(me_), u, v)) {
        TensorPart part = assemble(local_[u], r, g_.node(u).unit_width);
        wire::Frame f;
        f.type = wire::MsgType::Units;
        f.plan_id = plan_id_;
        f.node_id = static_cast<std::uint32_t>(g_.node(u).id);
        f.range_lo = static_cast<std::uint32_t>(r.lo);
        f.range_hi = static_cast<std::uint32_t>(r.hi);
        f.payload = wire::pack_floats(part.values);
        conn_.send(std::move(f));
      }
    }
  }

  static bool covered(std::span<const TensorPart> a, std::span<const TensorPart> b, const UnitRange& want) {
    Units reach = want.lo;
    bool progress = true;
    while (reach < want.hi && progress) {
      progress = false;
      for (auto parts : {a, b}) {
        for (const auto& p : parts) {
          if (p.range.lo <= reach && p.range.hi > reach) {
            reach = p.range.hi;
            progress = true;
          }
        }
      }
    }
    return reach >= want.hi;
  }

  TensorPart gather(std::size_t u, const UnitRange& need) {
    while (!covered(local_[u], received_[u], need)) {
      if (done_) throw Error(Errc::ProtocolViolation, "peer finished without sending required units");
      accept(conn_.recv(deadline_));
    }
    std::vector<TensorPart> parts = local_[u];
    parts.insert(parts.end(), received_[u].begin(), received_[u].end());
    return assemble(parts, need, g_.node(u).unit_width);
  }

  void accept(wire::Frame f) {
    switch (f.type) {
      case wire::MsgType::Units: {
        if (f.plan_id != plan_id_) throw Error(Errc::ProtocolViolation, "UNITS frame for another plan");
        if (!g_.has_node(static_cast<NodeId>(f.node_id))) {
          throw Error(Errc::ProtocolViolation, "UNITS frame names unknown node " + std::to_string(f.node_id));
        }
        const auto u = g_.index_of(static_cast<NodeId>(f.node_id));
        const UnitRange r{f.range_lo, f.range_hi};
        const Units width = g_.node(u).unit_width;
        if (r.hi > g_.node(u).out_units ||
            f.payload.size() != static_cast<std::size_t>(4 * r.size() * width)) {
          throw Error(Errc::ProtocolViolation, "UNITS frame size does not match its range");
        }
        received_[u].push_back({r, width, wire::unpack_floats(f.payload)});
        return;
      }
      case wire::MsgType::Done:
        done_ = true;
        return;
      case wire::MsgType::Error:
        raise_remote(f);
      default:
        throw Error(Errc::ProtocolViolation, "unexpected frame type during a request");
    }
  }

  Device me_;
  const ModelGraph& g_;
  const Weights& w_;
  const SchedulePlan& plan_;
  std::uint32_t plan_id_;
  Connection& conn_;
  net::Clock::time_point deadline_;
  std::vector<std::vector<TensorPart>> local_;
  std::vector<std::vector<TensorPart>> received_;
  bool done_ = false;
};

}  // namespace detail

struct ServerConfig {
  net::Endpoint bind{"127.0.0.1", 0};
  double throttle_mbps = std::numeric_limits<double>::infinity();
};

/// Serves one client connection at a time. Per request it receives the
/// bucket index, executes the server side of that bucket's plan and replies
/// DONE. No state survives a request.
class Server {
 public:
  Server(const ModelGraph& g, const PlanTable& table, const Weights& w, ServerConfig cfg = {})
      : g_(g), table_(table), w_(w), cfg_(std::move(cfg)), listener_(net::listen_on(cfg_.bind)),
        port_(net::local_port(listener_)) {}

  ~Server() { stop(); }

  std::uint16_t port() const { return port_; }
  std::size_t requests_served() const { return served_.load(); }

  void start() {
    thread_ = std::thread([this] { run(); });
  }

  void stop() {
    stop_ = true;
    if (thread_.joinable()) thread_.join();
  }

  /// Blocks until stop().
  void run() {
    while (!stop_) {
      auto s = net::accept_for(listener_, std::chrono::milliseconds(100));
      if (!s) continue;
      Connection conn(std::move(*s), cfg_.throttle_mbps);
      try {
        session(conn);
      } catch (const Error& e) {
        try {
          conn.send(error_frame(e.what()));
          conn.flush(net::Clock::now() + std::chrono::seconds(2));
        } catch (...) {
        }
      }
    }
  }

 private:
  bool next(Connection& conn, wire::Frame& f) {
    while (!stop_) {
      try {
        f = conn.recv(net::Clock::now() + std::chrono::milliseconds(200));
        return true;
      } catch (const Error& e) {
        if (e.code() == Errc::Timeout) continue;
        if (e.code() == Errc::ConnectionLost) return false;
        throw;
      }
    }
    return false;
  }

  void session(Connection& conn) {
    wire::Frame f;
    if (!next(conn, f)) return;
    if (f.type != wire::MsgType::Hello || f.plan_id == wire::kProbePlanId) {
      throw Error(Errc::ProtocolViolation, "expected HELLO");
    }
    const std::string theirs = wire::unpack_text(f.payload);
    if (theirs != table_.content_hash) {
      throw Error(Errc::HashMismatch, "client plan table " + theirs + " != server " + table_.content_hash);
    }
    wire::Frame ack;
    ack.type = wire::MsgType::Hello;
    ack.payload = wire::pack_text(table_.content_hash);
    conn.send(std::move(ack));

    while (next(conn, f)) {
      if (f.type == wire::MsgType::Hello && f.plan_id == wire::kProbePlanId) {
        conn.send(std::move(f));
        continue;
      }
      if (f.type != wire::MsgType::PlanSelect) throw Error(Errc::ProtocolViolation, "expected PLAN_SELECT");
      if (f.plan_id >= table_.plans.size()) throw Error(Errc::ProtocolViolation, "plan id out of range");
      const SchedulePlan& plan = table_.plans[f.plan_id];
      detail::SideExecutor side(Device::R, g_, w_, plan, f.plan_id, conn, net::Clock::time_point::max());
      side.run(nullptr);
      wire::Frame done;
      done.type = wire::MsgType::Done;
      done.plan_id = f.plan_id;
      conn.send(std::move(done));
      ++served_;
    }
  }

  const ModelGraph& g_;
  const PlanTable& table_;
  const Weights& w_;
  ServerConfig cfg_;
  net::Socket listener_;
  std::uint16_t port_;
  std::atomic<bool> stop_{false};
  std::atomic<std::size_t> served_{0};
  std::thread thread_;
};

/// Blocking server entry point.
inline void serve(const net::Endpoint& bind, const ModelGraph& g, const PlanTable& table, const Weights& w,
                  double throttle_mbps = std::numeric_limits<double>::infinity()) {
  Server s(g, table, w, {bind, throttle_mbps});
  s.run();
}

struct ClientConfig {
  net::Endpoint server{"127.0.0.1", 0};
  double throttle_mbps = std::numeric_limits<double>::infinity();
  std::chrono::milliseconds timeout{30000};
};

struct RunStats {
  double makespan_wallclock = 0.0;
  std::uint64_t bytes_tx = 0;
  std::uint64_t bytes_rx = 0;
  std::size_t bucket = 0;
  double bandwidth_mbps = 0.0;
};

class Client {
 public:
  Client(const ModelGraph& g, const PlanTable& table, const Weights& w, ClientConfig cfg)
      : g_(g), table_(table), w_(w), cfg_(std::move(cfg)),
        conn_(std::make_unique<Connection>(net::connect_to(cfg_.server), cfg_.throttle_mbps)) {
    const auto deadline = net::Clock::now() + cfg_.timeout;
    wire::Frame hello;
    hello.type = wire::MsgType::Hello;
    hello.payload = wire::pack_text(table_.content_hash);
    conn_->send(std::move(hello));
    const wire::Frame reply = conn_->recv(deadline);
    if (reply.type == wire::MsgType::Error) raise_remote(reply);
    if (reply.type != wire::MsgType::Hello || wire::unpack_text(reply.payload) != table_.content_hash) {
      throw Error(Errc::ProtocolViolation, "unexpected handshake reply");
    }
  }

  /// Round trip of a 64 KiB echo; returns Mbps.
  double probe_bandwidth() {
    const auto deadline = net::Clock::now() + cfg_.timeout;
    wire::Frame f;
    f.type = wire::MsgType::Hello;
    f.plan_id = wire::kProbePlanId;
    f.payload.assign(64 * 1024, 0xA5);
    const auto t0 = net::Clock::now();
    conn_->send(f);
    const wire::Frame back = conn_->recv(deadline);
    const double secs = std::chrono::duration<double>(net::Clock::now() - t0).count();
    if (back.type == wire::MsgType::Error) raise_remote(back);
    if (back.type != wire::MsgType::Hello || back.payload != f.payload) {
      throw Error(Errc::ProtocolViolation, "probe echo mismatch");
    }
    return 2.0 * 8.0 * static_cast<double>(f.payload.size()) / std::max(secs, 1e-9) / 1e6;
  }

  /// One stateless inference request at the given bandwidth estimate.
  std::pair<Tensor, RunStats> infer(const Tensor& input, double bandwidth_mbps) {
    RunStats st;
    st.bandwidth_mbps = bandwidth_mbps;
    st.bucket = table_.bucket_of(bandwidth_mbps);
    const auto t0 = net::Clock::now();
    const auto deadline = t0 + cfg_.timeout;
    conn_->set_deadline(deadline);
    conn_->reset_counters();
    wire::Frame sel;
    sel.type = wire::MsgType::PlanSelect;
    sel.plan_id = static_cast<std::uint32_t>(st.bucket);
    conn_->send(std::move(sel));
    detail::SideExecutor side(Device::M, g_, w_, table_.plans[st.bucket], sel.plan_id, *conn_, deadline);
    Tensor out = *side.run(&input);
    st.makespan_wallclock = std::chrono::duration<double>(net::Clock::now() - t0).count();
    if (!side.saw_done()) {
      for (;;) {
        const wire::Frame f = conn_->recv(deadline);
        if (f.type == wire::MsgType::Done) break;
        if (f.type == wire::MsgType::Error) raise_remote(f);
        throw Error(Errc::ProtocolViolation, "unexpected frame after the output was assembled");
      }
    }
    conn_->flush(deadline);
    st.bytes_tx = conn_->units_bytes_sent();
    st.bytes_rx = conn_->units_bytes_received();
    return {std::move(out), st};
  }

 private:
  const ModelGraph& g_;
  const PlanTable& table_;
  const Weights& w_;
  ClientConfig cfg_;
  std::unique_ptr<Connection> conn_;
};

/// Connects, samples the trace once at `now`, and runs one request.
inline std::pair<Tensor, RunStats> run_client(const net::Endpoint& server, const ModelGraph& g,
                                              const PlanTable& table, const Weights& w, const Tensor& input,
                                              const BandwidthTrace& trace, double now, ClientConfig cfg = {}) {
  cfg.server = server;
  Client c(g, table, w, cfg);
  return c.infer(input, estimate_bandwidth(trace, now));
}

}  // namespace intradp
