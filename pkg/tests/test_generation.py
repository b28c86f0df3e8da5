import threading

import numpy as np
import pytest

from longmab.generation import (
    GenerationError,
    GenerationParams,
    HttpChatGenerator,
    InFlightLimiter,
    MockOracle,
    MockOracleSpec,
    ProtocolError,
)
from longmab.probing import EmbeddingError, HttpEmbedder

PARAMS = GenerationParams(model="test-model", max_retries=3, timeout=5.0)


def make_client(fake_server, limiter=None):
    return HttpChatGenerator(
        base_url=fake_server.base_url,
        api_key="test-key",
        limiter=limiter,
        backoff_base=0.001,
    )


class TestMockOracle:
    SPEC = MockOracleSpec(evidence_chunk_ids=frozenset({2, 5}), gold_answer="Cabo Delgado")

    def gen(self, spec=None):
        return MockOracle(spec or self.SPEC)

    def test_all_evidence_present(self):
        out = self.gen().generate("p", PARAMS, meta={"selected_chunk_ids": [1, 2, 5, 7]})
        assert "Answer: Cabo Delgado" in out

    def test_partial_evidence_fails(self):
        out = self.gen().generate("p", PARAMS, meta={"selected_chunk_ids": [1, 2]})
        assert out.endswith("Answer: unknown")

    def test_pure_function_of_selection_and_spec(self):
        a = self.gen().generate("p1", PARAMS, meta={"selected_chunk_ids": [5, 2]})
        b = self.gen().generate("p2", PARAMS, meta={"selected_chunk_ids": [2, 5]})
        assert a == b

    def test_any_evidence_rule(self):
        spec = MockOracleSpec(
            evidence_chunk_ids=frozenset({2, 5}),
            gold_answer="g",
            success_rule="any_evidence",
        )
        assert "Answer: g" in self.gen(spec).generate("p", PARAMS, meta={"selected_chunk_ids": [2]})

    def test_fraction_threshold_rule(self):
        spec = MockOracleSpec(
            evidence_chunk_ids=frozenset({1, 2, 3, 4}),
            gold_answer="g",
            success_rule="fraction_threshold",
            threshold=0.5,
        )
        gen = self.gen(spec)
        assert "Answer: g" in gen.generate("p", PARAMS, meta={"selected_chunk_ids": [1, 2]})
        assert "unknown" in gen.generate("p", PARAMS, meta={"selected_chunk_ids": [1]})

    def test_partial_credit_answer(self):
        spec = MockOracleSpec(
            evidence_chunk_ids=frozenset({0, 1}),
            gold_answer="crimson harbor beacon",
            partial_credit=True,
        )
        out = self.gen(spec).generate("p", PARAMS, meta={"selected_chunk_ids": [0, 9]})
        assert "Answer: possibly crimson" in out

    def test_meta_required(self):
        with pytest.raises(ValueError):
            self.gen().generate("p", PARAMS, meta=None)

    def test_unknown_rule_rejected(self):
        with pytest.raises(ValueError):
            MockOracleSpec(evidence_chunk_ids=frozenset({1}), gold_answer="g",
                           success_rule="sometimes")


class TestParamsGuards:
    def test_max_tokens(self):
        with pytest.raises(ValueError):
            GenerationParams(model="m", max_tokens=0)

    def test_temperature(self):
        with pytest.raises(ValueError):
            GenerationParams(model="m", temperature=-0.1)


class TestHttpChat:
    def test_success_payload_shape(self, fake_server):
        client = make_client(fake_server)
        params = GenerationParams(model="m", temperature=0.3, max_tokens=64, seed=9)
        out = client.generate("hello", params)
        assert out == "ok 1"
        req = fake_server.requests[0]
        assert req["path"] == "/v1/chat/completions"
        assert req["auth"] == "Bearer test-key"
        assert req["payload"]["model"] == "m"
        assert req["payload"]["messages"] == [{"role": "user", "content": "hello"}]
        assert req["payload"]["temperature"] == 0.3
        assert req["payload"]["max_tokens"] == 64
        assert req["payload"]["seed"] == 9

    def test_retry_after_two_500s(self, fake_server):
        fake_server.script = [(500, None), (500, None),
                              (200, {"choices": [{"message": {"content": "recovered"}}]})]
        out = make_client(fake_server).generate("p", PARAMS)
        assert out == "recovered"
        assert fake_server.request_count == 3

    def test_429_is_retried(self, fake_server):
        fake_server.script = [(429, None)]
        assert make_client(fake_server).generate("p", PARAMS) == "ok 2"
        assert fake_server.request_count == 2

    def test_401_never_retried(self, fake_server):
        fake_server.script = [(401, None)]
        with pytest.raises(GenerationError) as err:
            make_client(fake_server).generate("p", PARAMS)
        assert fake_server.request_count == 1
        assert err.value.attempts == 1
        assert err.value.last_status == 401

    def test_retries_exhausted(self, fake_server):
        fake_server.script = [(500, None)] * 10
        params = GenerationParams(model="m", max_retries=2)
        with pytest.raises(GenerationError) as err:
            make_client(fake_server).generate("p", params)
        assert err.value.attempts == 3
        assert err.value.last_status == 500
        assert fake_server.request_count == 3

    def test_connection_error_retried_then_raised(self):
        client = HttpChatGenerator("http://127.0.0.1:1", "k", backoff_base=0.001)
        params = GenerationParams(model="m", max_retries=1, timeout=0.2)
        with pytest.raises(GenerationError) as err:
            client.generate("p", params)
        assert err.value.attempts == 2
        assert err.value.last_status is None

    def test_malformed_body(self, fake_server):
        fake_server.script = [(200, {"unexpected": True})]
        with pytest.raises(ProtocolError):
            make_client(fake_server).generate("p", PARAMS)

    def test_empty_prompt_rejected(self, fake_server):
        with pytest.raises(ValueError):
            make_client(fake_server).generate("", PARAMS)

    def test_inflight_never_exceeds_limit(self, fake_server):
        fake_server.delay = 0.03
        limiter = InFlightLimiter(3)
        client = make_client(fake_server, limiter=limiter)
        errors = []

        def worker():
            try:
                client.generate("p", PARAMS)
            except Exception as exc:  # pragma: no cover - surfaced below
                errors.append(exc)

        threads = [threading.Thread(target=worker) for _ in range(12)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert fake_server.request_count == 12
        assert fake_server.high_water <= 3
        assert fake_server.high_water >= 2, "requests never overlapped; test is vacuous"


class TestHttpEmbedder:
    def make(self, fake_server, batch_size=16):
        return HttpEmbedder(
            base_url=fake_server.base_url,
            api_key="k",
            model="emb",
            batch_size=batch_size,
            backoff_base=0.001,
        )

    def test_batching(self, fake_server):
        emb = self.make(fake_server, batch_size=2)
        out = emb.embed(["a", "bb", "ccc", "dddd", "eeeee"])
        assert len(out) == 5
        assert fake_server.request_count == 3
        assert out[2][0] == 3.0  # len("ccc")

    def test_vectors_sorted_by_index(self, fake_server):
        fake_server.script = [
            (200, {"data": [
                {"index": 1, "embedding": [2.0, 0.0]},
                {"index": 0, "embedding": [1.0, 0.0]},
            ]})
        ]
        out = self.make(fake_server).embed(["first", "second"])
        assert out[0][0] == 1.0 and out[1][0] == 2.0

    def test_malformed_body(self, fake_server):
        fake_server.script = [(200, {"data": "oops"})]
        with pytest.raises(ProtocolError):
            self.make(fake_server).embed(["a"])

    def test_count_mismatch(self, fake_server):
        fake_server.script = [(200, {"data": [{"index": 0, "embedding": [1.0]}]})]
        with pytest.raises(ProtocolError):
            self.make(fake_server).embed(["a", "b"])

    def test_non_finite_vector(self, fake_server):
        fake_server.script = [(200, {"data": [{"index": 0, "embedding": [float("nan")]}]})]
        with pytest.raises(ProtocolError):
            self.make(fake_server).embed(["a"])

    def test_retry_then_success(self, fake_server):
        fake_server.script = [(503, None)]
        out = self.make(fake_server).embed(["abc"])
        assert isinstance(out[0], np.ndarray)
        assert fake_server.request_count == 2

    def test_error_type(self, fake_server):
        fake_server.script = [(400, None)]
        with pytest.raises(EmbeddingError):
            self.make(fake_server).embed(["abc"])
