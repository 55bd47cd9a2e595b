#pragma once

// Emulation of the three-wire analog link between two modules.
//
// A sender drives a 100 Hz PWM line whose duty cycle carries one scalar in
// [0,1], offset by a base duty so that an attached neighbour is always seen.
// The receiver polls the line into a bounded queue of binary samples and reads
// the arithmetic mean of that queue.

#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vmc/clock.hpp"

namespace vmc::channel {

inline constexpr double kBaseDuty = 0.2;
inline constexpr double kValueSpan = 0.8;
inline constexpr double kPwmFrequencyHz = 100.0;
inline constexpr double kActivationThreshold = 0.1;
inline constexpr std::size_t kQueueCapacity = 5000;

struct WireSignal {
  double duty_cycle = 0.0;
  double frequency_hz = kPwmFrequencyHz;
};

/// duty = 0.2 + 0.8 * value. Throws std::domain_error outside [0,1].
WireSignal encode(double value);

/// Line with no sender attached.
inline WireSignal idle_signal() { return {0.0, kPwmFrequencyHz}; }

/// Level of the line at `phase`, counted in PWM periods: high during the
/// first `duty_cycle` of every period.
bool sample(const WireSignal& signal, double phase);

/// When a receiver polls, expressed as PWM phase. The poll loop runs at a
/// nominal rate with a fixed per-board rate error and Gaussian timing jitter
/// that accumulates from poll to poll, so phases sweep the whole period
/// instead of locking onto sample_rate / 100 Hz points.
class PollClock {
 public:
  PollClock(double sample_rate_hz, std::uint64_t seed, double rate_tolerance,
            double jitter_seconds);

  /// Phase in [0,1) of the next poll.
  double next();

 private:
  std::mt19937_64 rng_;
  double phase_ = 0.0;
  double step_ = 0.0;
  std::normal_distribution<double> jitter_;
};

/// Fixed-capacity FIFO of binary samples with an O(1) running mean.
class SampleQueue {
 public:
  explicit SampleQueue(std::size_t capacity = kQueueCapacity);

  void push(bool bit);
  /// Pushes `count` copies of `bit`; equivalent to repeated push().
  void fill(bool bit, std::size_t count);
  void clear();

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return ring_.size(); }
  bool empty() const { return size_ == 0; }
  double mean() const;

 private:
  std::vector<std::uint8_t> ring_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::size_t ones_ = 0;
};

enum class LinkStatus { NotReady, NotLive, Live };

struct Decoded {
  LinkStatus status = LinkStatus::NotReady;
  /// Meaningful only when live.
  double value = 0.0;

  bool live() const { return status == LinkStatus::Live; }
};

class ReceiverEndpoint {
 public:
  explicit ReceiverEndpoint(std::size_t capacity = kQueueCapacity,
                            double threshold = kActivationThreshold)
      : queue_(capacity), threshold_(threshold) {}

  void push(bool bit) { queue_.push(bit); }
  void fill(bool bit, std::size_t count) { queue_.fill(bit, count); }
  const SampleQueue& queue() const { return queue_; }
  double threshold() const { return threshold_; }

 private:
  SampleQueue queue_;
  double threshold_;
};

/// live iff mean > threshold; value = clamp((mean - 0.2) / 0.8, 0, 1).
Decoded decode(const ReceiverEndpoint& endpoint);

enum class Mode {
  Pwm,    ///< Bernoulli phase sampling into the bounded queue
  Ideal,  ///< values pass through exactly; liveness follows the plug state
};

struct BusConfig {
  Mode mode = Mode::Pwm;
  double sample_rate_hz = 1000.0;
  std::uint64_t seed = 0;
  std::size_t queue_capacity = kQueueCapacity;
  double threshold = kActivationThreshold;
  /// Largest relative error of a receiver's poll rate.
  double rate_tolerance = 0.02;
  /// Standard deviation of one poll interval.
  double poll_jitter_s = 1e-4;
};

/// Raised on double plug, unplug of an unpaired pin, or unknown pin names.
class ChannelError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// All pins of a simulation and the wires between them.
///
/// Receivers poll continuously: each read or line change first brings the
/// receiver's queue up to the current time using the duty cycle that was on
/// the line since the previous poll. Every public member takes the internal
/// lock, so sender and receiver may run on different threads.
class ChannelBus {
 public:
  explicit ChannelBus(BusConfig config = {});

  const BusConfig& config() const { return config_; }

  void add_sender(const std::string& name, SimTime now);
  void add_receiver(const std::string& name, SimTime now);
  bool has_pin(std::string_view name) const;

  void plug(std::string_view sender, std::string_view receiver, SimTime now);
  void unplug(std::string_view sender, std::string_view receiver, SimTime now);

  /// Sets the value carried by a sender. Values are clamped into [0,1].
  void transmit(std::string_view sender, double value, SimTime now);
  /// An offline sender drives the line low, as if unplugged.
  void set_online(std::string_view sender, bool online, SimTime now);

  Decoded read(std::string_view receiver, SimTime now);

  std::optional<std::string> peer_of_receiver(std::string_view receiver) const;

  std::size_t plug_events() const;
  std::size_t unplug_events() const;

 private:
  struct Sender {
    bool online = false;
    double value = 0.0;
    std::optional<std::size_t> receiver;
  };
  struct Receiver {
    ReceiverEndpoint endpoint;
    std::optional<std::size_t> sender;
    std::int64_t polled_ticks = 0;
    PollClock clock;
  };

  std::size_t sender_index(std::string_view name) const;
  std::size_t receiver_index(std::string_view name) const;
  std::int64_t ticks_at(SimTime t) const;
  double duty_of(const Receiver& r) const;
  void poll(Receiver& r, SimTime now);
  void poll_peer_of(const Sender& s, SimTime now);

  BusConfig config_;
  mutable std::mutex mutex_;
  std::vector<Sender> senders_;
  std::vector<Receiver> receivers_;
  std::vector<std::string> sender_names_;
  std::vector<std::string> receiver_names_;
  std::map<std::string, std::size_t, std::less<>> sender_by_name_;
  std::map<std::string, std::size_t, std::less<>> receiver_by_name_;
  std::size_t plugs_ = 0;
  std::size_t unplugs_ = 0;
};

/// Stable 64-bit FNV-1a hash, used to derive per-entity seeds.
std::uint64_t stable_hash(std::string_view text, std::uint64_t salt = 0);

}  // namespace vmc::channel
