import json
import math
import socket
import threading
import time

import numpy as np
import pytest

from moenas import evaluation as ev
from moenas import genome as gen
from moenas.evaluation import (
    EvaluationRequest,
    EvaluationResponse,
    ExternalEvaluator,
    Outcome,
    ProtocolError,
    compose_objectives,
    dispatch,
    surrogate_accuracy,
)
from moenas.network import CostReport, MacroConfig, network_cost, speed
from moenas.problems import NASProblem, ZDT1Problem, distance_to_zdt1_front, zdt1

from conftest import mock_command
import mock_evaluator


@pytest.fixture
def fixed_cost(monkeypatch):
    monkeypatch.setattr(ev, "network_cost", lambda g, macro: CostReport(mult_adds=10**9, params=2 * 10**6))


class TestObjectives:
    def test_external_and_speed(self, golden, fixed_cost):
        assert compose_objectives(golden, ["external", "speed"], MacroConfig(), [0.9]) == (0.9, 1.0)

    def test_declared_order(self, golden, fixed_cost):
        out = compose_objectives(golden, ["speed", "params_inverse", "external:a", "external:b"], MacroConfig(), [3, 4])
        assert out == (1.0, 0.5, 3.0, 4.0)

    def test_external_count_mismatch(self, golden):
        with pytest.raises(ValueError):
            compose_objectives(golden, ["external", "speed"], MacroConfig(), [])

    def test_unknown_objective(self, golden):
        with pytest.raises(ValueError):
            compose_objectives(golden, ["latency"], MacroConfig())

    def test_speed_matches_network(self, golden):
        (s,) = compose_objectives(golden, ["speed"], MacroConfig())
        assert s == speed(network_cost(golden, MacroConfig()))


class TestSurrogate:
    def test_formula_at_3e8(self, golden, monkeypatch):
        monkeypatch.setattr(ev, "network_cost", lambda g, macro: CostReport(mult_adds=3 * 10**8))
        monkeypatch.setattr(ev, "genome_jitter", lambda g: 0.0)
        assert surrogate_accuracy(golden, MacroConfig()) == pytest.approx(0.78445, abs=1e-5)

    def test_jitter_is_the_residual(self, rng):
        for _ in range(20):
            g = gen.random_genome(rng)
            m = network_cost(g, MacroConfig()).mult_adds
            base = 0.5 + 0.45 * (1 - math.exp(-m / 3e8))
            assert surrogate_accuracy(g, MacroConfig()) - base == pytest.approx(ev.genome_jitter(g), abs=1e-12)

    def test_bounds_and_determinism(self, rng):
        for _ in range(100):
            g = gen.random_genome(rng)
            a = surrogate_accuracy(g, MacroConfig())
            assert 0.48 <= a < 0.97
            assert -0.02 <= ev.genome_jitter(g) < 0.02
            assert surrogate_accuracy(gen.deserialize(gen.serialize(g)), MacroConfig()) == a

    def test_jitter_spread(self, rng):
        jit = [ev.genome_jitter(gen.random_genome(rng)) for _ in range(500)]
        assert np.mean(jit) == pytest.approx(0.0, abs=0.003)
        assert max(jit) - min(jit) > 0.035


class TestZDT1:
    @pytest.mark.parametrize(
        "x,expected",
        [([0.0] * 8, (1.0, 0.0)), ([1.0] + [0.0] * 7, (0.0, 1.0)), ([0.25] + [0.0] * 7, (0.75, 0.5))],
    )
    def test_values(self, x, expected):
        assert zdt1(x) == pytest.approx(expected)

    def test_off_front_is_dominated(self):
        on = zdt1([0.25] + [0.0] * 7)
        off = zdt1([0.25] + [0.1] * 7)
        assert on[0] == off[0] and on[1] > off[1]

    def test_distance(self):
        d = distance_to_zdt1_front([zdt1([0.36] + [0.0] * 7), (0.0, 0.0)])
        assert d[0] < 1e-4
        # |(1-t, sqrt t)|^2 = 1 - t + t^2 is smallest at t = 1/2
        assert d[1] == pytest.approx(math.sqrt(0.75), abs=1e-6)

    def test_operators_stay_in_box(self, rng):
        p = ZDT1Problem(8)
        a, b = p.random(rng), p.random(rng)
        for _ in range(200):
            a, b = p.crossover(a, b, 0.5, rng)
            a = p.mutate(a, 0.5, rng)
            assert all(0.0 <= v <= 1.0 for v in a + b)


class TestProtocol:
    def test_request_round_trip(self, golden):
        req = EvaluationRequest(7, golden, MacroConfig())
        line = req.to_line()
        assert line.endswith("\n") and "\n" not in line[:-1]
        msg = json.loads(line)
        assert msg["macro"] == {"template": "cifar10", "n": 2, "f": 32, "resolution": 32, "classes": 10}
        assert EvaluationRequest.from_line(line) == req

    def test_response_round_trip(self):
        for resp in (EvaluationResponse(3, (0.91,)), EvaluationResponse(4, None, "out of memory")):
            assert EvaluationResponse.from_line(resp.to_line()) == resp

    @pytest.mark.parametrize(
        "line",
        ["this is not json", "[1,2]", '{"objectives":[1]}', '{"id":1,"objectives":[NaN]}', '{"id":1}'],
    )
    def test_bad_responses(self, line):
        with pytest.raises(ProtocolError):
            EvaluationResponse.from_line(line)


def requests_for(n, seed=0):
    rng = np.random.default_rng(seed)
    return [EvaluationRequest(i, gen.random_genome(rng), MacroConfig()) for i in range(n)]


def expected_for(reqs):
    return [(surrogate_accuracy(r.genome, r.macro),) for r in reqs]


class TestExternalEvaluator:
    def test_echo(self):
        reqs = requests_for(6)
        with ExternalEvaluator.connect(mock_command(), timeout=10) as evaluator:
            out = evaluator.evaluate(reqs, max_in_flight=3)
        assert [r.objectives for r in out] == expected_for(reqs)
        assert [r.id for r in out] == list(range(6))

    def test_out_of_order_with_garbage(self, caplog):
        reqs = requests_for(8, seed=1)
        with ExternalEvaluator.connect(mock_command("--reverse", "--garbage"), timeout=10) as evaluator:
            out = evaluator.evaluate(reqs, max_in_flight=8)
        assert [r.objectives for r in out] == expected_for(reqs)
        assert any("malformed" in rec.message for rec in caplog.records)

    def test_dropped_request_is_retried(self):
        reqs = requests_for(3, seed=2)
        with ExternalEvaluator.connect(mock_command("--drop-first"), timeout=0.5, retries=1) as evaluator:
            out = evaluator.evaluate(reqs, max_in_flight=3)
        assert all(r.ok for r in out)
        assert [r.objectives for r in out] == expected_for(reqs)

    def test_no_retries_left(self):
        reqs = requests_for(2, seed=3)
        with ExternalEvaluator.connect(mock_command("--drop-first"), timeout=0.3, retries=0) as evaluator:
            out = evaluator.evaluate(reqs, max_in_flight=2)
        assert not out[0].ok and "timeout" in out[0].error
        assert out[1].ok

    def test_dead_evaluator_does_not_hang(self):
        reqs = requests_for(4, seed=4)
        start = time.monotonic()
        with ExternalEvaluator.connect(mock_command("--die-after", "2"), timeout=30) as evaluator:
            out = evaluator.evaluate(reqs, max_in_flight=2)
        assert time.monotonic() - start < 10
        assert not any(r.ok for r in out)

    def test_unstartable_command(self):
        with pytest.raises(ev.EvaluatorError):
            ExternalEvaluator.connect(["/nonexistent/evaluator"])

    def test_socket_transport(self):
        server = socket.create_server(("127.0.0.1", 0))
        port = server.getsockname()[1]

        def serve_one():
            conn, _ = server.accept()
            with conn, conn.makefile("r") as fin, conn.makefile("w") as fout:
                mock_evaluator.serve(fin, fout, mock_evaluator.parse(["--reverse"]))

        t = threading.Thread(target=serve_one, daemon=True)
        t.start()
        reqs = requests_for(5, seed=5)
        with ExternalEvaluator.connect(address=f"127.0.0.1:{port}", timeout=10) as evaluator:
            out = evaluator.evaluate(reqs, max_in_flight=5)
        server.close()
        assert [r.objectives for r in out] == expected_for(reqs)

    def test_bad_address(self):
        with pytest.raises(ValueError):
            ev.open_transport(address="localhost")

    def test_nas_problem_external_slot(self):
        reqs = requests_for(3, seed=6)
        evaluator = ExternalEvaluator.connect(mock_command("--constant", "0.9"), timeout=10)
        problem = NASProblem(("external", "speed"), evaluator=evaluator)
        try:
            out = problem.evaluate([(r.id, r.genome) for r in reqs])
        finally:
            problem.close()
        for r, o in zip(reqs, out):
            assert o.objectives == (0.9, speed(network_cost(r.genome, MacroConfig())))


class CountingBatch:
    def __init__(self):
        self.calls = 0
        self.seen = []

    def __call__(self, items, parallelism):
        self.calls += 1
        self.seen.extend(x for _, x in items)
        return [Outcome((float(x),)) for _, x in items]


class TestDispatch:
    def test_identical_candidates_dispatch_once(self):
        batch = CountingBatch()
        out, n = dispatch([(i, 5) for i in range(32)], str, batch, {})
        assert n == 1 and batch.seen == [5]
        assert all(o.objectives == (5.0,) for o in out)

    def test_cached_are_skipped(self):
        cache = {str(x): (float(x),) for x in range(7)}
        batch = CountingBatch()
        out, n = dispatch(list(enumerate(range(32))), str, batch, cache)
        assert n == 25 and len(batch.seen) == 25
        assert [o.objectives for o in out] == [(float(x),) for x in range(32)]
        assert len(cache) == 32

    def test_fully_cached_makes_no_call(self):
        batch = CountingBatch()
        cache = {"1": (1.0,)}
        _, n = dispatch([(0, 1), (1, 1)], str, batch, cache)
        assert n == 0 and batch.calls == 0

    def test_failures_not_cached(self):
        cache = {}
        out, _ = dispatch([(0, 1)], str, lambda items, p: [Outcome(None, "boom")], cache)
        assert out[0].error == "boom" and cache == {}

    def test_parallelism_invariance(self, rng):
        problem = NASProblem()
        items = [(i, gen.random_genome(rng)) for i in range(16)]
        serial, _ = dispatch(items, problem.key, problem.evaluate, {}, 1)
        parallel, _ = dispatch(items, problem.key, problem.evaluate, {}, 8)
        assert serial == parallel

    def test_bad_parallelism(self):
        with pytest.raises(ValueError):
            dispatch([(0, 1)], str, CountingBatch(), {}, 0)
