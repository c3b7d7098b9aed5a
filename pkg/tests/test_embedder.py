import hashlib
import json
import math

import httpx
import numpy as np
import pytest

from logactive.embedder import (LOCAL_HASH, REMOTE, EmbedderConfig, EmbeddingCache, RemoteEmbeddingClient,
                                embed_batch, hash_projection_embed, l2_normalize, load_embeddings, save_embeddings,
                                token_slot)
from logactive.errors import DimensionMismatch, InputError, RemoteUnavailable


# ---------------------------------------------------------------- local hash

def test_error_error_warn_example():
    v = hash_projection_embed("error error warn", 8, seed=7).values
    i_err, _ = token_slot("error", 8, 7)
    i_warn, _ = token_slot("warn", 8, 7)
    assert i_err != i_warn  # the hand computation assumes no collision
    assert abs(v[i_err]) == pytest.approx(2 / math.sqrt(5), abs=1e-15)
    assert abs(v[i_warn]) == pytest.approx(1 / math.sqrt(5), abs=1e-15)
    assert np.count_nonzero(v) == 2


def test_token_slot_matches_independent_keyed_blake2b():
    for tok in ("error", "kernel", "x1"):
        h = int.from_bytes(hashlib.blake2b(tok.encode(), digest_size=8, key=(7).to_bytes(8, "little")).digest(),
                           "little")
        assert token_slot(tok, 8, 7) == (h % 8, -1.0 if h >> 63 else 1.0)


def test_no_tokens_gives_zero_vector():
    v = hash_projection_embed("--- ::: !!!", 16).values
    assert not v.any()


def test_hash_embedding_deterministic_and_bag_of_words():
    a = hash_projection_embed("disk sda1 failed badly", 32, 3).values
    b = hash_projection_embed("failed badly disk sda1", 32, 3).values
    assert np.array_equal(a, b)
    assert float(a @ a) == pytest.approx(1.0)


def test_hash_dimension_too_small():
    with pytest.raises(InputError):
        hash_projection_embed("x", 1)


@pytest.mark.parametrize("v,expected", [((3, 4), (0.6, 0.8)), ((0, 0), (0, 0)), ((1, 0), (1, 0))])
def test_l2_normalize(v, expected):
    assert np.allclose(l2_normalize(v), expected)


def test_embed_batch_local_preserves_order():
    cfg = EmbedderConfig(mode=LOCAL_HASH, dimension=16, seed=1)
    out = embed_batch(["a b", "c"], cfg, record_ids=[10, 11])
    assert [v.record_id for v in out] == [10, 11]
    assert all(v.source == LOCAL_HASH for v in out)


def test_config_flag_parsing():
    assert EmbedderConfig.from_flag("hash:32").dimension == 32
    assert EmbedderConfig.from_flag("remote", endpoint="http://x").mode == REMOTE
    with pytest.raises(InputError):
        EmbedderConfig.from_flag("bert")
    with pytest.raises(InputError):
        EmbedderConfig(batch_size=0)


def test_save_load_embeddings(tmp_path):
    X = np.arange(6.0).reshape(2, 3)
    save_embeddings(tmp_path / "e.npz", [4, 5], X)
    ids, Y = load_embeddings(tmp_path / "e.npz")
    assert ids.tolist() == [4, 5] and np.array_equal(X, Y)


# ---------------------------------------------------------------- remote

def _fake_vec(text, d):
    rng = np.random.default_rng(int(hashlib.sha256(text.encode()).hexdigest()[:8], 16))
    return rng.normal(size=d).tolist()


class FakeEndpoint:
    """Records requests; answers with deterministic vectors, optional failures first."""

    def __init__(self, d=8, fail_first=0, status=503, wrong_dim=False):
        self.d = d
        self.fail_first = fail_first
        self.status = status
        self.wrong_dim = wrong_dim
        self.requests = []

    def __call__(self, request: httpx.Request):
        body = json.loads(request.content)
        self.requests.append((request, body))
        if len(self.requests) <= self.fail_first:
            return httpx.Response(self.status, json={"error": "busy"})
        d = self.d + (1 if self.wrong_dim else 0)
        data = [{"object": "embedding", "index": i, "embedding": _fake_vec(t, d)} for i, t in enumerate(body["input"])]
        data.reverse()  # the client must order by index
        return httpx.Response(200, json={"object": "list", "data": data, "model": body["model"]})


def _client(fake, **cfg):
    config = EmbedderConfig(mode=REMOTE, endpoint="https://embed.test/v1/embeddings", dimension=8,
                            max_retries=2, backoff_base=0.01, **cfg)
    sleeps = []
    client = RemoteEmbeddingClient(config, transport=httpx.MockTransport(fake), sleep=sleeps.append,
                                   api_key="sk-test")
    return config, client, sleeps


def test_remote_wire_format_and_order():
    fake = FakeEndpoint()
    config, client, _ = _client(fake, batch_size=2, max_parallel=1)
    out = embed_batch(["a", "b", "c"], config, EmbeddingCache(), client)
    assert len(out) == 3 and all(len(v.values) == 8 for v in out)
    assert np.allclose(out[2].values, _fake_vec("c", 8))
    req, body = fake.requests[0]
    assert req.method == "POST" and req.headers["authorization"] == "Bearer sk-test"
    assert body == {"model": "text-embedding-ada-002", "input": ["a", "b"]}
    assert len(fake.requests) == 2


def test_1536_dim_remote():
    fake = FakeEndpoint(d=1536)
    config = EmbedderConfig(mode=REMOTE, endpoint="https://e.test", dimension=1536)
    client = RemoteEmbeddingClient(config, transport=httpx.MockTransport(fake), api_key="k")
    out = embed_batch(["x", "y", "z"], config, EmbeddingCache(), client)
    assert [len(v.values) for v in out] == [1536] * 3


def test_cache_makes_reruns_free(tmp_path):
    fake = FakeEndpoint()
    config, client, _ = _client(fake, cache_path=str(tmp_path / "cache.jsonl"))
    first = embed_batch(["same", "same", "other"], config, EmbeddingCache(config.cache_path), client)
    n_calls = len(fake.requests)
    second = embed_batch(["same", "other"], config, EmbeddingCache(config.cache_path), client)
    assert len(fake.requests) == n_calls
    assert np.array_equal(first[0].values, first[1].values)
    assert np.array_equal(first[0].values, second[0].values)
    assert len((tmp_path / "cache.jsonl").read_text().splitlines()) == 2


def test_backoff_then_success():
    fake = FakeEndpoint(fail_first=2, status=429)
    config, client, sleeps = _client(fake)
    out = embed_batch(["a"], config, EmbeddingCache(), client)
    assert len(out) == 1 and client.calls == 3
    assert sleeps == [0.01, 0.02]


def test_endpoint_down_persists_nothing(tmp_path):
    fake = FakeEndpoint(fail_first=10**6)
    config, client, _ = _client(fake, cache_path=str(tmp_path / "c.jsonl"), batch_size=1, max_parallel=1)
    cache = EmbeddingCache(config.cache_path)
    with pytest.raises(RemoteUnavailable):
        embed_batch(["a", "b"], config, cache, client)
    assert len(cache) == 0
    assert not (tmp_path / "c.jsonl").exists()


def test_transport_errors_are_retried_then_fail():
    def boom(request):
        raise httpx.ConnectError("refused", request=request)

    config = EmbedderConfig(mode=REMOTE, endpoint="https://e.test", dimension=8, max_retries=1, backoff_base=0)
    client = RemoteEmbeddingClient(config, transport=httpx.MockTransport(boom), sleep=lambda s: None, api_key="k")
    with pytest.raises(RemoteUnavailable):
        client.embed(["a"])
    assert client.calls == 2


def test_wrong_dimension():
    config, client, _ = _client(FakeEndpoint(wrong_dim=True))
    with pytest.raises(DimensionMismatch):
        embed_batch(["a"], config, EmbeddingCache(), client)


def test_missing_credentials(monkeypatch):
    monkeypatch.delenv("LOGACTIVE_EMBED_API_KEY", raising=False)
    with pytest.raises(InputError):
        RemoteEmbeddingClient(EmbedderConfig(mode=REMOTE, endpoint="https://e.test"))
