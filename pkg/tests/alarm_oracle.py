"""Brute-force reference interpreter for the per-channel alarm rules.

Deliberately independent of the gateway implementation: a literal,
straight-line restatement of the monitoring rules, used as the oracle
for equivalence testing.

Rules restated:
  * a sample outside the inclusive [low, high] band marks the flag;
  * a second consecutive outside sample opens an alarm window that
    expires ``alarm_wait`` seconds later;
  * one inside sample clears the flag;
  * cancel before the window expires returns to normal; confirm before
    expiry dispatches immediately; responses at or past the deadline are
    ignored;
  * a tick at or past the deadline dispatches one SMS per target;
  * after dispatch, the channel stays quiet until a sample inside the
    band resets it;
  * a quick alarm always dispatches immediately and touches no channel
    state.

Event tuples (pre-sorted by the caller, processed in list order):
  ("sample", ts, value)
  ("tick", ts)
  ("response", ts, "cancel" | "confirm")
  ("quick", ts)

Returns the dispatch-decision trace: a list of
  ("dispatch", ts, n_targets) | ("cancel", ts) | ("quick", ts, n_targets)
"""

from __future__ import annotations


def replay_alarm_rules(low, high, alarm_wait, n_targets, events):
    trace = []
    mode = "normal"
    deadline = None
    for ev in events:
        kind = ev[0]
        ts = ev[1]
        if kind == "sample":
            value = ev[2]
            outside = value < low or value > high
            if mode == "normal":
                if outside:
                    mode = "flagged"
            elif mode == "flagged":
                if outside:
                    mode = "pending"
                    deadline = ts + alarm_wait
                else:
                    mode = "normal"
            elif mode == "pending":
                pass
            elif mode == "dispatched":
                if not outside:
                    mode = "normal"
        elif kind == "tick":
            if mode == "pending" and deadline <= ts:
                mode = "dispatched"
                deadline = None
                trace.append(("dispatch", ts, n_targets))
        elif kind == "response":
            answer = ev[2]
            if mode == "pending" and ts < deadline:
                if answer == "cancel":
                    mode = "normal"
                    deadline = None
                    trace.append(("cancel", ts))
                else:
                    mode = "dispatched"
                    deadline = None
                    trace.append(("dispatch", ts, n_targets))
        elif kind == "quick":
            trace.append(("quick", ts, n_targets))
        else:
            raise ValueError(f"unknown oracle event {kind!r}")
    return trace


def gateway_trace(effects):
    """Project a gateway effect list onto the oracle's trace alphabet."""
    trace = []
    for effect in effects:
        if effect.kind == "alarm_dispatched":
            if effect.data.get("sensor_id") == "QUICK":
                trace.append(("quick", effect.ts, effect.data["targets"]))
            else:
                trace.append(("dispatch", effect.ts, effect.data["targets"]))
        elif effect.kind == "alarm_cancelled":
            trace.append(("cancel", effect.ts))
    return trace
