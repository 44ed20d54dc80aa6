"""Zone planning and the three-stage classifier."""

from oscsteer.zones.planner import StageLabel, ZonePlan, build_plan
