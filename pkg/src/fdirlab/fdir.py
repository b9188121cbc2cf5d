"""PUS-style monitoring chain fed by the detector's boolean failure indices.

Per sensor there is one parameter monitor (pMon) whose expected value is
"no fault", one functional monitor (fMon) counting consecutive out-of-limit
(OOL) samples, one event and one recovery action.  When the count reaches
the persistency the fMon fires: an event is logged and the recovery action
is recorded as a :class:`ReactionEvent`.

Re-arm policies after a trigger:

* ``IMMEDIATE_REARM``: the counter restarts, so an OOL run of length L fires
  ``L // persistency`` times.
* ``DISABLE_UNTIL_RECOVERY``: the pMon is suppressed.  With
  ``recovery_cooldown=None`` it re-arms on the first in-limit sample (one
  reaction per OOL run); with an integer it stays suppressed for exactly that
  many samples after the trigger.

Samples never passed to :func:`fmon_update` (gaps in ``sample_index``) count
as in-limit.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .simgen import SENSORS, Sensor


class RearmPolicy(enum.Enum):
    DISABLE_UNTIL_RECOVERY = "disable_until_recovery"
    IMMEDIATE_REARM = "immediate_rearm"


@dataclass(frozen=True)
class FdirConfig:
    persistency: int = 27
    expected_value: bool = False
    event_ids: tuple = (0x5A01, 0x5A02)
    recovery_actions: tuple = ("isolate_accelerometer", "isolate_imu")
    rearm_policy: RearmPolicy = RearmPolicy.DISABLE_UNTIL_RECOVERY
    recovery_cooldown: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "rearm_policy", RearmPolicy(self.rearm_policy))
        object.__setattr__(self, "event_ids", tuple(int(e) for e in self.event_ids))
        object.__setattr__(self, "recovery_actions", tuple(self.recovery_actions))
        if self.persistency < 1:
            raise ConfigError("persistency", "must be >= 1")
        if self.expected_value:
            raise ConfigError("expected_value", "the failure-index pMon expects 0 (no fault)")
        if len(self.event_ids) != 2 or len(self.recovery_actions) != 2:
            raise ConfigError("event_ids", "need one event id and one action per sensor")
        if self.recovery_cooldown is not None and self.recovery_cooldown < 0:
            raise ConfigError("recovery_cooldown", "must be >= 0 or None")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["rearm_policy"] = self.rearm_policy.value
        return d


@dataclass(frozen=True)
class ReactionEvent:
    sensor: Sensor
    trigger_sample: int
    source_run_start: int
    event_id: int
    action: str
    trajectory: int = 0


@dataclass
class SensorChain:
    counter: int = 0
    enabled: bool = True
    run_start: int = -1
    last_index: int | None = None
    awaiting_recovery: bool = False
    suppressed_until: int | None = None


@dataclass
class FdirChainState:
    chains: dict = field(default_factory=lambda: {s: SensorChain() for s in SENSORS})
    events: list = field(default_factory=list)
    reactions: list = field(default_factory=list)
    trajectory: int = 0


def pmon_check(prediction, cfg):
    """True when the failure index differs from the expected (zero) value."""
    return bool(prediction) != cfg.expected_value


def set_pmon_enabled(state, sensor, enabled):
    """Enable or disable one sensor's pMon; the OOL counter is cleared."""
    ch = state.chains[Sensor(sensor)]
    ch.enabled = bool(enabled)
    ch.counter = 0
    return state


def fmon_update(state, sensor, ool, sample_index, cfg):
    """Advance one sensor's fMon by one sample; returns the reaction or None."""
    sensor = Sensor(sensor)
    ch = state.chains[sensor]
    if ch.last_index is not None:
        if sample_index <= ch.last_index:
            raise DataError(f"sample index {sample_index} not after {ch.last_index}")
        if sample_index > ch.last_index + 1:
            # skipped samples are in-limit
            ch.counter = 0
            ch.awaiting_recovery = False
    ch.last_index = sample_index

    if ch.awaiting_recovery:
        if ool:
            return None
        ch.awaiting_recovery = False
    if ch.suppressed_until is not None:
        if sample_index < ch.suppressed_until:
            ch.counter = 0
            return None
        ch.suppressed_until = None
    if not ch.enabled or not ool:
        ch.counter = 0
        return None

    if ch.counter == 0:
        ch.run_start = sample_index
    ch.counter += 1
    if ch.counter < cfg.persistency:
        return None

    event_id = cfg.event_ids[sensor]
    reaction = ReactionEvent(sensor, sample_index, ch.run_start, event_id,
                             cfg.recovery_actions[sensor], state.trajectory)
    state.events.append((sensor, sample_index, event_id))
    state.reactions.append(reaction)
    ch.counter = 0
    if cfg.rearm_policy is RearmPolicy.DISABLE_UNTIL_RECOVERY:
        if cfg.recovery_cooldown is None:
            ch.awaiting_recovery = True
        else:
            ch.suppressed_until = sample_index + 1 + cfg.recovery_cooldown
    return reaction


def _as_tracks(prediction_tracks):
    arr = np.asarray(prediction_tracks, dtype=bool)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DataError(f"prediction tracks must be (T, n_sensors), got {arr.shape}")
    return arr


def run_chain(prediction_tracks, cfg, enabled=(True, True), sensors=None, trajectory=0):
    """Replay whole ``(T, 2)`` boolean tracks through the chain.

    Returns ``{sensor: [ReactionEvent, ...]}``.  Only OOL samples are fed to
    :func:`fmon_update`; the samples in between are in-limit by the gap rule,
    which keeps the replay proportional to the number of positive samples.
    A 1-D track is treated as a single sensor (``sensors`` picks which).
    """
    tracks = _as_tracks(prediction_tracks)
    if sensors is None:
        sensors = SENSORS[:tracks.shape[1]]
    state = FdirChainState(trajectory=trajectory)
    out = {}
    for col, sensor in enumerate(sensors):
        set_pmon_enabled(state, sensor, enabled[int(sensor)])
        ool = tracks[:, col] != cfg.expected_value
        before = len(state.reactions)
        for t in np.flatnonzero(ool):
            fmon_update(state, sensor, True, int(t), cfg)
        out[sensor] = state.reactions[before:]
    return out


def run_chain_dataset(pred_tracks, cfg, enabled=(True, True)):
    """:func:`run_chain` over every trajectory; a flat reaction list."""
    reactions = []
    for k, track in enumerate(pred_tracks):
        for rs in run_chain(track, cfg, enabled, trajectory=k).values():
            reactions.extend(rs)
    return reactions


REACTION_LOG_FIELDS = ("trajectory", "sensor", "trigger_sample", "source_run_start",
                       "event_id", "action")


def write_reaction_log(reactions, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REACTION_LOG_FIELDS)
        for r in reactions:
            w.writerow([r.trajectory, r.sensor.name.lower(), r.trigger_sample,
                        r.source_run_start, r.event_id, r.action])
    return Path(path)


def read_reaction_log(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [ReactionEvent(Sensor[row["sensor"].upper()], int(row["trigger_sample"]),
                          int(row["source_run_start"]), int(row["event_id"]), row["action"],
                          int(row["trajectory"])) for row in rows]
