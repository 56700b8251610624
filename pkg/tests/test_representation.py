import numpy as np
import pytest

from mtattack.errors import ConfigError, EmbedderUnavailable, ProtocolError
from mtattack.representation import (CachedEmbedder, HashedNgramEmbedder, OneHotEmbedder, RemoteEmbedder,
                                     build_joint, embed)
from mtattack.text import normalize_and_tokenize as T
from mtattack.toy import six_task_victim, two_task_victim
from mtattack.victims import QueryLedger, VictimResponse, query


def test_same_text_same_vector():
    e = HashedNgramEmbedder(256)
    assert np.array_equal(embed(e, "bad movie"), embed(e, "bad movie"))


def test_one_hot_counts():
    v = embed(OneHotEmbedder(["a", "b"]), "a a b")
    assert v == pytest.approx([2 / 5 ** 0.5, 1 / 5 ** 0.5], abs=1e-3)
    assert v == pytest.approx([0.894, 0.447], abs=1e-3)


def test_one_hot_out_of_vocab_is_zero():
    assert not embed(OneHotEmbedder(["a"]), "zzz").any()


def test_cache_dim_mismatch():
    with pytest.raises(ConfigError):
        CachedEmbedder(HashedNgramEmbedder(256), cache_dim=128)


@pytest.mark.parametrize("victim, dim, length", [(two_task_victim, 256, 768), (six_task_victim, 128, 896)])
def test_joint_length(victim, dim, length):
    v = victim()
    j = build_joint(HashedNgramEmbedder(dim), "i love this", query(v, "i love this", QueryLedger()))
    assert j.vector.shape == (length,)


def test_joint_segments():
    e = HashedNgramEmbedder(256)
    resp = VictimResponse((("a", "same"), ("b", "output")))
    j1, j2 = build_joint(e, "first text", resp), build_joint(e, "second text", resp)
    assert not np.array_equal(j1.segment(0), j2.segment(0))
    assert np.array_equal(j1.segment(1), j2.segment(1))
    assert np.array_equal(j1.segment(2), j2.segment(2))


def _basis_server(serve, dim=3, short=False):
    def handler(p):
        vecs = [np.eye(dim)[i % dim].tolist() for i, _ in enumerate(p["texts"])]
        if short:
            vecs = vecs[:-1]
        return 200, {"vectors": vecs, "dim": dim}
    return serve({("POST", "/"): handler})


def test_remote_embedder_and_cache(serve):
    s = _basis_server(serve)
    e = RemoteEmbedder(s.url + "/")
    resp = VictimResponse((("a", "one"), ("b", "two")))
    vecs = e.embed_many([T("x"), T("one"), T("two")])
    assert [v.tolist() for v in vecs] == np.eye(3).tolist()
    calls = e.network_calls
    j = build_joint(e, "x", resp)
    assert j.vector.tolist() == np.eye(3).ravel().tolist()
    assert e.network_calls == calls


def test_remote_wrong_length(serve):
    s = _basis_server(serve, short=True)
    with pytest.raises(ProtocolError):
        RemoteEmbedder(s.url + "/").embed_many([T("a"), T("b")])


def test_remote_dim_drift(serve):
    s = _basis_server(serve, dim=3)
    e = RemoteEmbedder(s.url + "/", dim=4)
    with pytest.raises(ProtocolError):
        e.embed(T("a"))


def test_remote_unreachable():
    with pytest.raises(EmbedderUnavailable):
        RemoteEmbedder("http://127.0.0.1:9/", timeout=0.5).embed(T("a"))
