#include "cfp2ffa/dynamic_controller.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace cfp2ffa {

std::int64_t truncate_ratio(double r) {
  const double nearest = std::round(r);
  if (std::abs(r - nearest) < 1e-9) return static_cast<std::int64_t>(nearest);
  return static_cast<std::int64_t>(std::trunc(r));
}

DynamicController::DynamicController(std::int64_t T_init, double lambda, std::int64_t T_min,
                                     std::int64_t T_max, std::int64_t update_every)
    : update_every_(update_every) {
  if (T_min < 0) throw std::invalid_argument("controller: T_min must be non-negative");
  if (T_min > T_max) throw std::invalid_argument("controller: T_min > T_max");
  if (T_init < T_min || T_init > T_max) {
    throw std::invalid_argument("controller: T_init outside [T_min, T_max]");
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("controller: lambda must be positive");
  }
  if (update_every < 1) throw std::invalid_argument("controller: update_every must be >= 1");
  state_.lambda = lambda;
  state_.T = T_init;
  state_.T_min = T_min;
  state_.T_max = T_max;
}

DynamicController DynamicController::from_state(const ControllerState& state,
                                                std::int64_t update_every) {
  DynamicController controller(state.T, state.lambda, state.T_min, state.T_max, update_every);
  controller.state_ = state;
  return controller;
}

bool DynamicController::update(double d_real_score) {
  if (!(d_real_score >= 0.0 && d_real_score <= 1.0)) {
    throw std::invalid_argument("controller: discriminator score outside [0, 1]");
  }
  pending_sum_ += d_real_score;
  if (++pending_ < update_every_) return false;
  const double score = pending_sum_ / static_cast<double>(pending_);
  pending_ = 0;
  pending_sum_ = 0.0;
  apply(score);
  return true;
}

void DynamicController::apply(double score) {
  // sign(0) = -1
  state_.r_steps += (score - 0.5 > 0.0) ? 1 : -1;
  const std::int64_t moved = state_.T + truncate_ratio(state_.r());
  state_.T = std::clamp(moved, state_.T_min, state_.T_max);
  ++state_.update_count;
}

std::int64_t DynamicController::sample_t(std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::int64_t> dist(0, state_.T);
  return dist(rng);
}

ControllerTrace::ControllerTrace(const std::filesystem::path& path) : out_(path) {
  if (!out_) throw std::runtime_error("cannot open controller trace " + path.string());
  out_ << "update_count,d_real_score,r,T\n";
}

void ControllerTrace::record(const ControllerState& state, double d_real_score) {
  char line[128];
  std::snprintf(line, sizeof(line), "%llu,%.9g,%.9g,%lld\n",
                static_cast<unsigned long long>(state.update_count), d_real_score, state.r(),
                static_cast<long long>(state.T));
  out_ << line;
  out_.flush();
}

}  // namespace cfp2ffa
