#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

namespace cfp2ffa {

/// Snapshot of the difficulty controller.
///
/// `r` is held as an integer count of +/-lambda steps so that, e.g., ten
/// steps of 0.1 give exactly 1.0 and int(r) does not lose a unit to
/// floating-point accumulation.
struct ControllerState {
  std::int64_t r_steps = 0;
  double lambda = 0.1;
  std::int64_t T = 10;
  std::int64_t T_min = 0;
  std::int64_t T_max = 999;
  std::uint64_t update_count = 0;

  double r() const { return static_cast<double>(r_steps) * lambda; }

  friend bool operator==(const ControllerState&, const ControllerState&) = default;
};

/// int(r) truncated toward zero, snapping values within 1e-9 of an integer.
std::int64_t truncate_ratio(double r);

/// Adaptive maximum diffusion step: accumulates +/-lambda from the sign of
/// (D(real) - 0.5) and moves T by int(r) after every applied update.
class DynamicController {
 public:
  /// Throws std::invalid_argument unless T_min <= T_init <= T_max,
  /// lambda > 0 and update_every >= 1.
  DynamicController(std::int64_t T_init, double lambda, std::int64_t T_min, std::int64_t T_max,
                    std::int64_t update_every = 1);

  static DynamicController from_state(const ControllerState& state,
                                      std::int64_t update_every = 1);

  /// Feed one batch-mean discriminator score on noised real images. With
  /// `update_every = k > 1` the mean of k consecutive scores is applied once.
  /// Returns true when the state changed. Throws on scores outside [0, 1].
  bool update(double d_real_score);

  /// Uniform draw from {0, ..., T}.
  std::int64_t sample_t(std::mt19937_64& rng) const;

  const ControllerState& state() const { return state_; }
  std::int64_t update_every() const { return update_every_; }

 private:
  void apply(double score);

  ControllerState state_;
  std::int64_t update_every_ = 1;
  std::int64_t pending_ = 0;
  double pending_sum_ = 0.0;
};

/// Appends one CSV record per applied controller update.
class ControllerTrace {
 public:
  explicit ControllerTrace(const std::filesystem::path& path);
  void record(const ControllerState& state, double d_real_score);

 private:
  std::ofstream out_;
};

}  // namespace cfp2ffa
