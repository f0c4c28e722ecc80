#include "mas/indexes.hpp"

#include <algorithm>
#include <cmath>

namespace mas::indexes {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

const char* to_string(Index i) {
  switch (i) {
    case Index::machine: return "machine";
    case Index::robustness: return "robustness";
    case Index::position: return "position";
    case Index::setup: return "setup";
    case Index::timeslot: return "timeslot";
  }
  return "?";
}

bool IndexMask::any() const {
  return std::any_of(active.begin(), active.end(), [](bool b) { return b; });
}

IndexMask IndexMask::all() {
  IndexMask m;
  m.active.fill(true);
  return m;
}

IndexMask mask_for(Strategy s, bool robustness_enabled) {
  if (s == Strategy::opt) {
    IndexMask m = IndexMask::all();
    m.set(Index::robustness, robustness_enabled);
    return m;
  }
  IndexMask m;
  m.set(Index::robustness, robustness_enabled);
  m.set(Index::timeslot, true);
  return m;
}

double WeightConfig::weight(Index i) const {
  switch (i) {
    case Index::machine: return weights.machine;
    case Index::robustness: return weights.robustness;
    case Index::position: return weights.position;
    case Index::setup: return weights.setup;
    case Index::timeslot: return weights.timeslot;
  }
  return 0.0;
}

double machine_index(const CapabilityVector& requirement, const CapabilityVector& capability) {
  if (requirement.graded.empty()) return 1.0;
  double excess = 0.0;
  for (const auto& [name, need] : requirement.graded) {
    auto it = capability.graded.find(name);
    if (it == capability.graded.end() || it->second < need) {
      throw Error(Error::Code::invalid_argument,
                  "graded requirement '" + name + "' exceeds the machine capability");
    }
    excess += std::max(0.0, (it->second - need) / need);
  }
  return 1.0 / (1.0 + excess / static_cast<double>(requirement.graded.size()));
}

double robustness_index(Minutes gap_usable, Minutes d, Minutes r) {
  if (gap_usable < d) {
    throw Error(Error::Code::invalid_argument, "gap shorter than the operation");
  }
  if (r == 0) return 1.0;
  return clamp01(static_cast<double>(gap_usable - d) / static_cast<double>(r));
}

double position_index(Minutes remainder, Minutes apt) {
  if (remainder <= 0 || remainder >= apt) return 1.0;
  return static_cast<double>(remainder) / static_cast<double>(apt);
}

double setup_index(const std::optional<std::string>& predecessor_family,
                   const std::string& required_family, Minutes idle_between, Minutes apt) {
  if (!predecessor_family || *predecessor_family != required_family) return 0.0;
  return clamp01(1.0 - static_cast<double>(std::max<Minutes>(0, idle_between)) / static_cast<double>(apt));
}

double timeslot_index(Minutes placement_start, Minutes placement_end, Interval window, Minutes d,
                      Direction direction) {
  if (placement_start < window.start || placement_end > window.end) {
    throw Error(Error::Code::invalid_argument, "placement outside the order's time slot");
  }
  const Minutes slack = window.length() - d;
  if (slack <= 0) return 1.0;
  const Minutes offset = direction == Direction::forward ? placement_start - window.start
                                                         : window.end - placement_end;
  return clamp01(1.0 - static_cast<double>(offset) / static_cast<double>(slack));
}

double total_index(const IndexVector& v, const WeightConfig& w, const IndexMask& mask) {
  if (!mask.any()) throw Error(Error::Code::invalid_argument, "no active index");
  double num = 0.0, den = 0.0;
  int active = 0;
  double single = 0.0;
  for (std::size_t k = 0; k < kIndexCount; ++k) {
    const Index i = static_cast<Index>(k);
    if (!mask[i]) continue;
    const double value = v[i].value_or(0.0);
    num += w.weight(i) * value;
    den += w.weight(i);
    single = value;
    ++active;
  }
  if (active == 1) return single;
  if (den <= 0.0) throw Error(Error::Code::invalid_argument, "all active weights are zero");
  return clamp01(num / den);
}

Machine update_apt(Machine machine, Minutes completed_duration, double alpha) {
  if (completed_duration <= 0) {
    throw Error(Error::Code::invalid_argument, "completed duration must be positive");
  }
  if (!machine.apt_observed) {
    machine.apt = completed_duration;
    machine.apt_observed = true;
    return machine;
  }
  const double next = alpha * static_cast<double>(completed_duration) +
                      (1.0 - alpha) * static_cast<double>(machine.apt);
  // Round toward the observed duration so a constant workload reaches it exactly.
  const Minutes rounded = completed_duration > machine.apt
                              ? static_cast<Minutes>(std::ceil(next - 1e-9))
                              : static_cast<Minutes>(std::floor(next + 1e-9));
  machine.apt = std::max<Minutes>(1, rounded);
  return machine;
}

}  // namespace mas::indexes
