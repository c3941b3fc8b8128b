"""Exporter conformance against the consuming toolkit's reader."""

import functools

import pytest

from pyencoder.export import ExportJob, export, read_rows


def criterion(name):
    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                print(f"\nACCEPTANCE {name}: FAIL")
                raise
            print(f"\nACCEPTANCE {name}: PASS")
            return result

        return inner

    return wrap


@criterion("exporter-conformance")
def test_exporter_conformance(tiny_encoder_dir, corpus_path, tmp_path):
    stancekit_embed = pytest.importorskip(
        "stancekit.embed", reason="primary toolkit not installed"
    )
    rows = read_rows(corpus_path)
    assert len(rows) == 20

    out_a = tmp_path / "export_a.tgae"
    out_b = tmp_path / "export_b.tgae"
    for out in (out_a, out_b):
        export(ExportJob(dataset_path=corpus_path, encoder=tiny_encoder_dir, out_path=str(out)))

    # re-export is byte-identical
    assert out_a.read_bytes() == out_b.read_bytes()

    # the primary reader accepts the store with zero validation warnings
    store = stancekit_embed.read_store(str(out_a))
    assert store.warnings == []

    # one joint entry per example; one separate entry per unique doc / topic
    assert set(store.joint) == {r.example_id for r in rows}
    assert set(store.sep_docs) == {r.doc_id for r in rows}
    assert set(store.sep_topics) == {r.topic_key for r in rows}

    # sequences respect the caps and the declared dimension
    for topic_seq, doc_seq in store.joint.values():
        assert len(topic_seq) <= 5
        assert len(doc_seq) <= 200
        assert topic_seq.dim == store.dim
        assert doc_seq.dim == store.dim
