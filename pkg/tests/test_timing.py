import io
import json
from fractions import Fraction

import pytest

from qdblab.timing import (
    C,
    CausalityError,
    EventSchedule,
    Port,
    deadline,
    dump_jsonl,
    propagation_delay,
    round_timely,
    run_schedule,
)


class TestDelays:
    def test_colocated(self):
        assert propagation_delay(0) == 0

    def test_one_light_second(self):
        assert propagation_delay(299_792_458) == 1

    def test_300m(self):
        assert float(propagation_delay(300)) == pytest.approx(1.00069228559e-6, rel=1e-11)

    def test_negative(self):
        with pytest.raises(ValueError):
            propagation_delay(-1)

    def test_deadline_unit(self):
        assert deadline(Fraction(C, 2)) == 1

    def test_deadline_300m(self):
        assert float(deadline(300)) == pytest.approx(2.00138457118e-6, rel=1e-11)

    @pytest.mark.parametrize("b", [0.001, 1, 300, 12_345.678])
    def test_deadline_is_twice_delay(self, b):
        assert deadline(b) == 2 * propagation_delay(b)

    @pytest.mark.parametrize("b", [0, -5])
    def test_deadline_rejects(self, b):
        with pytest.raises(ValueError):
            deadline(b)


class TestRoundTimely:
    def test_boundary_inclusive(self):
        assert round_timely(0, deadline(300), 300)

    def test_strict_excess(self):
        assert not round_timely(0, float(deadline(300)) + 1e-12, 300)

    def test_rejects_reversed(self):
        with pytest.raises(ValueError):
            round_timely(1e-6, 0, 300)

    @pytest.mark.parametrize("d", [0, 1, 150, 299.999, 300])
    def test_instant_responder_within_bound(self, d):
        t0 = Fraction(7, 10**6)
        t_recv = t0 + propagation_delay(d) + propagation_delay(d)
        assert round_timely(t0, t_recv, 300)


class Echo:
    """Sends every non-echo message straight back."""

    def receive(self, msg, port):
        if msg.kind != "echo":
            port.send(msg.sender, msg.payload, "echo")


class Recorder:
    def __init__(self):
        self.seen = []

    def receive(self, msg, port):
        self.seen.append((port.now, msg.kind))


class TestSchedule:
    def test_empty(self):
        assert run_schedule(EventSchedule({"V": 0}), {"V": Recorder()}) == []

    def test_single_message_delay(self):
        d = 450
        sched = EventSchedule({"V": 0, "P": d})
        sched.post("V", "P", "hi", Fraction(1, 10**6), "data")
        log = run_schedule(sched, {"V": Recorder(), "P": Recorder()})
        assert len(log) == 1
        assert log[0].arrival_time - log[0].emit_time == Fraction(d) / C

    def test_delivery_order_and_ties(self):
        sched = EventSchedule({"V": 0, "A": 100, "B": 100})
        rec = Recorder()
        sched.post("V", "B", None, 0, "second")  # same arrival as the next one, inserted first
        sched.post("V", "A", None, 0, "third")
        sched.post("A", "A", None, 0, "timer")
        log = run_schedule(sched, {"V": rec, "A": rec, "B": rec})
        assert [m.kind for m in log] == ["timer", "second", "third"]
        times = [m.arrival_time for m in log]
        assert times == sorted(times)

    def test_echo_round_trip(self):
        sched = EventSchedule({"V": 0, "P": 300})
        sched.post("V", "P", "x", 0, "ping")
        log = run_schedule(sched, {"V": Recorder(), "P": Echo()})
        assert [m.kind for m in log] == ["ping", "echo"]
        assert round_timely(0, log[-1].arrival_time, 300)

    def test_backdating_rejected(self):
        class Cheat:
            def receive(self, msg, port):
                if msg.kind == "challenge":
                    port.send("V", "answer", "response", emit_time=port.now - Fraction(1, 10**9))

        sched = EventSchedule({"V": 0, "P": 450})
        sched.post("V", "P", None, 0, "challenge")
        with pytest.raises(CausalityError):
            run_schedule(sched, {"V": Recorder(), "P": Cheat()})

    def test_oob_closes(self):
        sched = EventSchedule({"A": 0, "B": 500})
        sched.oob_closes_at = Fraction(1, 10**6)
        sched.post("A", "B", None, 0, "oob")
        with pytest.raises(CausalityError):
            sched.post("A", "B", None, Fraction(1, 10**6), "oob")

    def test_timer_must_be_self_addressed(self):
        with pytest.raises(ValueError):
            EventSchedule({"A": 0, "B": 1}).post("A", "B", None, 0, "timer")

    def test_port_future_emission_allowed(self):
        sched = EventSchedule({"A": 0})
        port = Port(sched, "A", Fraction(5))
        msg = port.send("A", None, "timer", emit_time=7)
        assert msg.arrival_time == 7

    def test_jsonl_export(self):
        sched = EventSchedule({"V": 0, "P": 300})
        sched.post("V", "P", "x", 0, "ping", round=3)
        log = run_schedule(sched, {"V": Recorder(), "P": Echo()})
        buf = io.StringIO()
        dump_jsonl(log, buf)
        lines = buf.getvalue().splitlines()
        assert len(lines) == 2
        rec = json.loads(lines[0])
        assert set(rec) == {"round", "sender", "receiver", "emit_time", "arrival_time", "payload_kind"}
        assert rec["round"] == 3 and rec["payload_kind"] == "ping"


def test_far_responder_must_commit_before_challenge_lands():
    """Replays the out-of-bound arithmetic: a timely answer from d > B predates the challenge."""
    bound = 300
    for d in (301, 450, 600, 10_000):
        t_send = Fraction(3, 10**6)
        latest_emit = t_send + deadline(bound) - propagation_delay(d)
        challenge_arrival = t_send + propagation_delay(d)
        assert latest_emit < challenge_arrival
        assert round_timely(t_send, latest_emit + propagation_delay(d), bound)
        assert not round_timely(t_send, challenge_arrival + propagation_delay(d), bound)
