#pragma once

// Assessment indexes a machine agent attaches to a candidate placement.
// Every index maps into [0, 1]; higher is better.

#include <array>
#include <optional>
#include <string>

#include "mas/model.hpp"
#include "mas/plan.hpp"

namespace mas::indexes {

enum class Index { machine = 0, robustness, position, setup, timeslot };
inline constexpr std::size_t kIndexCount = 5;

const char* to_string(Index i);

/// Which indexes a strategy takes into account.
struct IndexMask {
  std::array<bool, kIndexCount> active{};

  bool operator[](Index i) const { return active[static_cast<std::size_t>(i)]; }
  void set(Index i, bool on) { active[static_cast<std::size_t>(i)] = on; }
  bool any() const;

  static IndexMask all();
  static IndexMask none() { return {}; }
};

/// The strategy's mask: OPT uses all five, Force and X-Competition use
/// robustness and time slot, with robustness removable by option.
IndexMask mask_for(Strategy s, bool robustness_enabled);

struct WeightConfig {
  IndexWeights weights;
  bool robustness_enabled = true;

  double weight(Index i) const;
};

struct IndexVector {
  std::array<std::optional<double>, kIndexCount> value{};
  double total = 0.0;

  std::optional<double> operator[](Index i) const { return value[static_cast<std::size_t>(i)]; }
  void set(Index i, double v) { value[static_cast<std::size_t>(i)] = v; }
};

/// 1 / (1 + mean relative over-fulfilment of the graded requirements).
/// Binary parameters are ignored. Throws when a graded requirement exceeds the capability.
double machine_index(const CapabilityVector& requirement, const CapabilityVector& capability);

/// Share of the robustness time the gap can hold: (gap_usable - d) / r, 1 when r == 0.
double robustness_index(Minutes gap_usable, Minutes d, Minutes r);

/// Penalises unusable fragments left in the gap: 1 for no fragment or one of at
/// least APT, remainder / apt otherwise.
double position_index(Minutes remainder, Minutes apt);

/// Reuse of the previous setup, decaying linearly with idle time relative to APT.
double setup_index(const std::optional<std::string>& predecessor_family,
                   const std::string& required_family, Minutes idle_between, Minutes apt);

/// Position of the placement inside the order's time slot, relative to the
/// dispatching direction. Throws when the placement leaves the window.
double timeslot_index(Minutes placement_start, Minutes placement_end, Interval window, Minutes d,
                      Direction direction);

/// Weighted arithmetic mean of the components active under `mask`.
double total_index(const IndexVector& v, const WeightConfig& w, const IndexMask& mask);

/// Exponential moving average of completed durations; the first completion
/// replaces the initial value.
Machine update_apt(Machine machine, Minutes completed_duration, double alpha = 0.2);

}  // namespace mas::indexes
