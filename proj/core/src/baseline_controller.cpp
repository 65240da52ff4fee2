#include <algorithm>
#include <cmath>

#include "scenforge/simcore.hpp"

namespace scenforge::sim {

BaselineOptions BaselineOptions::with_faults(const std::vector<std::string>& faults) {
  BaselineOptions o;
  for (const std::string& f : faults) {
    if (f == "no-right-turn-lane-change") {
      o.fault_no_right_turn_lane_change = true;
    } else if (f == "late-braking") {
      o.fault_late_braking = true;
    } else if (f == "red-light-rolling") {
      o.fault_red_light_rolling = true;
    } else if (!f.empty()) {
      throw std::invalid_argument("unknown fault '" + f + "'");
    }
  }
  return o;
}

namespace {

class BaselineController final : public EgoController {
 public:
  explicit BaselineController(BaselineOptions opts) : opts_(opts) {}

  std::string name() const override {
    std::string n = "baseline";
    std::string sep = ":";
    if (opts_.fault_no_right_turn_lane_change) {
      n += sep + "no-right-turn-lane-change";
      sep = ",";
    }
    if (opts_.fault_late_braking) {
      n += sep + "late-braking";
      sep = ",";
    }
    if (opts_.fault_red_light_rolling) {
      n += sep + "red-light-rolling";
      sep = ",";
    }
    return n;
  }

  Control step(const Observation& o) override {
    double v = o.self.speed;
    double target = std::min(o.speed_limit, o.curve_speed_limit);
    double a = opts_.cruise_gain * (target - v);
    a = std::clamp(a, -opts_.comfort_decel, opts_.comfort_accel);

    auto stop_within = [&](double dist) { return -(v * v) / (2.0 * std::max(dist, 0.05)); };

    if (o.lead.present) {
      if (opts_.fault_late_braking) {
        // reacts only once the gap is nearly gone, then with a short target
        double desired = opts_.min_gap + 0.3 * opts_.time_headway * v;
        if (o.lead.gap < 1.6 * desired) {
          double a_follow = 0.6 * (o.lead.gap - desired) + 1.1 * (o.lead.speed - v);
          a = std::min(a, a_follow);
        }
      } else {
        double desired = opts_.min_gap + opts_.time_headway * v;
        double a_follow =
            opts_.gap_gain * (o.lead.gap - desired) + opts_.closure_gain * (o.lead.speed - v);
        a = std::min(a, a_follow);
      }
    }

    // slow toward the speed the tightest upcoming curve allows; capped so
    // curve shaping alone never counts as a harsh brake
    if (o.curve_speed_target < v) {
      double needed = (o.curve_speed_target * o.curve_speed_target - v * v) /
                      (2.0 * std::max(o.curve_dist, 0.5));
      if (needed < -0.2 * opts_.comfort_decel) a = std::min(a, std::max(needed, -2.8));
    }

    // hold at the path end (dead ends, wrong approach lane)
    {
      double d = o.dist_to_path_end - 1.5;
      double needed = stop_within(d);
      if (d < 1.0 || needed < -0.6 * opts_.comfort_decel) a = std::min(a, needed);
    }

    if (o.signal.present && o.signal.color == SignalColor::RED) {
      double d = o.signal.dist_to_stopline - opts_.signal_standoff - o.self.length / 2.0;
      bool roll_through =
          opts_.fault_red_light_rolling && v > 0.5 && d / std::max(v, 0.1) < 3.5;
      if (!roll_through) {
        double needed = stop_within(d);
        if (d < 2.0 || needed < -0.3 * opts_.comfort_decel) a = std::min(a, needed);
      }
    }

    Control c;
    c.accel = a;
    if (o.lane_change_needed != 0 &&
        (o.lane_change_reason == LaneChangeReason::ROUTE_TARGET || o.dist_to_junction < opts_.lane_change_horizon)) {
      bool right_turn_prep = o.lane_change_reason == LaneChangeReason::TURN_RIGHT_APPROACH;
      if (!(opts_.fault_no_right_turn_lane_change && right_turn_prep)) {
        const AdjacentView& side = o.lane_change_needed > 0 ? o.right : o.left;
        if (side.exists && side.same_dir && side.gap_ok && v > 1.0) {
          c.intent = o.lane_change_needed > 0 ? Control::Intent::CHANGE_RIGHT
                                              : Control::Intent::CHANGE_LEFT;
        }
      }
    }
    return c;
  }

 private:
  BaselineOptions opts_;
};

}  // namespace

std::unique_ptr<EgoController> baseline_controller(const BaselineOptions& opts) {
  return std::make_unique<BaselineController>(opts);
}

std::unique_ptr<EgoController> make_controller(std::string_view spec) {
  std::string s(spec);
  std::string kind = s;
  std::vector<std::string> faults;
  auto colon = s.find(':');
  if (colon != std::string::npos) {
    kind = s.substr(0, colon);
    std::string rest = s.substr(colon + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      auto comma = rest.find(',', pos);
      if (comma == std::string::npos) {
        faults.push_back(rest.substr(pos));
        break;
      }
      faults.push_back(rest.substr(pos, comma - pos));
      pos = comma + 1;
    }
  }
  if (kind != "baseline") throw std::invalid_argument("unknown controller '" + kind + "'");
  return baseline_controller(BaselineOptions::with_faults(faults));
}

}  // namespace scenforge::sim
