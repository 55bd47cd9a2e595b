#include "vmc/channel.hpp"

#include <algorithm>
#include <cmath>

namespace vmc::channel {

WireSignal encode(double value) {
  if (!std::isfinite(value) || value < 0.0 || value > 1.0) {
    throw std::domain_error("wire value must lie in [0,1]");
  }
  return {kBaseDuty + kValueSpan * value, kPwmFrequencyHz};
}

bool sample(const WireSignal& signal, double phase) {
  if (signal.duty_cycle <= 0.0) return false;
  if (signal.duty_cycle >= 1.0) return true;
  return phase - std::floor(phase) < signal.duty_cycle;
}

PollClock::PollClock(double sample_rate_hz, std::uint64_t seed,
                     double rate_tolerance, double jitter_seconds)
    : rng_(seed) {
  if (!(sample_rate_hz > 0.0)) {
    throw std::invalid_argument("sample rate must be positive");
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> error(-rate_tolerance, rate_tolerance);
  phase_ = unit(rng_);
  step_ = kPwmFrequencyHz / (sample_rate_hz * (1.0 + error(rng_)));
  jitter_ = std::normal_distribution<double>(0.0, kPwmFrequencyHz * jitter_seconds);
}

double PollClock::next() {
  phase_ += step_ + jitter_(rng_);
  phase_ -= std::floor(phase_);
  return phase_;
}

SampleQueue::SampleQueue(std::size_t capacity) : ring_(capacity, 0) {
  if (capacity == 0) throw std::invalid_argument("queue capacity must be > 0");
}

void SampleQueue::push(bool bit) {
  const std::size_t cap = ring_.size();
  if (size_ == cap) {
    ones_ -= ring_[head_];
    head_ = (head_ + 1) % cap;
    --size_;
  }
  ring_[(head_ + size_) % cap] = bit ? 1 : 0;
  ++size_;
  ones_ += bit ? 1 : 0;
}

void SampleQueue::fill(bool bit, std::size_t count) {
  const std::size_t cap = ring_.size();
  if (count >= cap) {
    std::fill(ring_.begin(), ring_.end(), bit ? 1 : 0);
    head_ = 0;
    size_ = cap;
    ones_ = bit ? cap : 0;
    return;
  }
  for (std::size_t i = 0; i < count; ++i) push(bit);
}

void SampleQueue::clear() {
  head_ = 0;
  size_ = 0;
  ones_ = 0;
}

double SampleQueue::mean() const {
  return size_ == 0 ? 0.0
                    : static_cast<double>(ones_) / static_cast<double>(size_);
}

Decoded decode(const ReceiverEndpoint& endpoint) {
  const auto& q = endpoint.queue();
  if (q.empty()) return {LinkStatus::NotReady, 0.0};
  const double m = q.mean();
  if (!(m > endpoint.threshold())) return {LinkStatus::NotLive, 0.0};
  return {LinkStatus::Live, std::clamp((m - kBaseDuty) / kValueSpan, 0.0, 1.0)};
}

std::uint64_t stable_hash(std::string_view text, std::uint64_t salt) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ salt;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

ChannelBus::ChannelBus(BusConfig config) : config_(config) {
  if (!(config_.sample_rate_hz > 0.0)) {
    throw std::invalid_argument("sample rate must be positive");
  }
}

std::int64_t ChannelBus::ticks_at(SimTime t) const {
  return static_cast<std::int64_t>(
      std::floor(to_seconds(t) * config_.sample_rate_hz + 1e-9));
}

void ChannelBus::add_sender(const std::string& name, SimTime) {
  std::lock_guard lock(mutex_);
  if (sender_by_name_.contains(name)) return;
  sender_by_name_.emplace(name, senders_.size());
  sender_names_.push_back(name);
  senders_.push_back(Sender{});
}

void ChannelBus::add_receiver(const std::string& name, SimTime now) {
  std::lock_guard lock(mutex_);
  if (receiver_by_name_.contains(name)) return;
  receiver_by_name_.emplace(name, receivers_.size());
  receiver_names_.push_back(name);
  Receiver r{ReceiverEndpoint(config_.queue_capacity, config_.threshold),
             std::nullopt, ticks_at(now),
             PollClock(config_.sample_rate_hz, stable_hash(name, config_.seed),
                       config_.rate_tolerance, config_.poll_jitter_s)};
  receivers_.push_back(std::move(r));
}

bool ChannelBus::has_pin(std::string_view name) const {
  std::lock_guard lock(mutex_);
  return sender_by_name_.contains(name) || receiver_by_name_.contains(name);
}

std::size_t ChannelBus::sender_index(std::string_view name) const {
  auto it = sender_by_name_.find(name);
  if (it == sender_by_name_.end()) {
    throw ChannelError("unknown sender pin " + std::string(name));
  }
  return it->second;
}

std::size_t ChannelBus::receiver_index(std::string_view name) const {
  auto it = receiver_by_name_.find(name);
  if (it == receiver_by_name_.end()) {
    throw ChannelError("unknown receiver pin " + std::string(name));
  }
  return it->second;
}

double ChannelBus::duty_of(const Receiver& r) const {
  if (!r.sender) return 0.0;
  const Sender& s = senders_[*r.sender];
  if (!s.online) return 0.0;
  return encode(std::clamp(s.value, 0.0, 1.0)).duty_cycle;
}

void ChannelBus::poll(Receiver& r, SimTime now) {
  const std::int64_t target = ticks_at(now);
  const std::int64_t pending = target - r.polled_ticks;
  if (pending <= 0) return;
  r.polled_ticks = target;
  if (config_.mode == Mode::Ideal) return;

  const double duty = duty_of(r);
  // Samples older than the queue capacity would be evicted anyway.
  const auto n = static_cast<std::size_t>(
      std::min<std::int64_t>(pending, static_cast<std::int64_t>(
                                          r.endpoint.queue().capacity())));
  if (duty <= 0.0 || duty >= 1.0) {
    r.endpoint.fill(duty >= 1.0, n);
    return;
  }
  const WireSignal line{duty, kPwmFrequencyHz};
  for (std::size_t i = 0; i < n; ++i) r.endpoint.push(sample(line, r.clock.next()));
}

void ChannelBus::poll_peer_of(const Sender& s, SimTime now) {
  if (s.receiver) poll(receivers_[*s.receiver], now);
}

void ChannelBus::plug(std::string_view sender, std::string_view receiver,
                      SimTime now) {
  std::lock_guard lock(mutex_);
  const auto si = sender_index(sender);
  const auto ri = receiver_index(receiver);
  if (senders_[si].receiver || receivers_[ri].sender) {
    throw ChannelError("pin already paired: " + std::string(sender) + " -> " +
                       std::string(receiver));
  }
  poll(receivers_[ri], now);
  senders_[si].receiver = ri;
  receivers_[ri].sender = si;
  ++plugs_;
}

void ChannelBus::unplug(std::string_view sender, std::string_view receiver,
                        SimTime now) {
  std::lock_guard lock(mutex_);
  const auto si = sender_index(sender);
  const auto ri = receiver_index(receiver);
  if (senders_[si].receiver != ri || receivers_[ri].sender != si) {
    throw ChannelError("pins not paired: " + std::string(sender) + " -> " +
                       std::string(receiver));
  }
  poll(receivers_[ri], now);
  senders_[si].receiver.reset();
  receivers_[ri].sender.reset();
  ++unplugs_;
}

void ChannelBus::transmit(std::string_view sender, double value, SimTime now) {
  std::lock_guard lock(mutex_);
  Sender& s = senders_[sender_index(sender)];
  poll_peer_of(s, now);
  s.value = std::isfinite(value) ? std::clamp(value, 0.0, 1.0) : 0.0;
}

void ChannelBus::set_online(std::string_view sender, bool online,
                            SimTime now) {
  std::lock_guard lock(mutex_);
  Sender& s = senders_[sender_index(sender)];
  poll_peer_of(s, now);
  s.online = online;
  if (!online) s.value = 0.0;
}

Decoded ChannelBus::read(std::string_view receiver, SimTime now) {
  std::lock_guard lock(mutex_);
  Receiver& r = receivers_[receiver_index(receiver)];
  poll(r, now);
  if (config_.mode == Mode::Ideal) {
    if (!r.sender) return {LinkStatus::NotLive, 0.0};
    const Sender& s = senders_[*r.sender];
    if (!s.online) return {LinkStatus::NotLive, 0.0};
    return {LinkStatus::Live, s.value};
  }
  return decode(r.endpoint);
}

std::optional<std::string> ChannelBus::peer_of_receiver(
    std::string_view receiver) const {
  std::lock_guard lock(mutex_);
  const Receiver& r = receivers_[receiver_index(receiver)];
  if (!r.sender) return std::nullopt;
  return sender_names_[*r.sender];
}

std::size_t ChannelBus::plug_events() const {
  std::lock_guard lock(mutex_);
  return plugs_;
}

std::size_t ChannelBus::unplug_events() const {
  std::lock_guard lock(mutex_);
  return unplugs_;
}

}  // namespace vmc::channel
