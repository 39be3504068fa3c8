from __future__ import annotations

import numpy as np
import pytest
from fastapi.testclient import TestClient

from ttpattrib.attribution import train_weight_matrix
from ttpattrib.corpus import docs_by_actor, make_splits
from ttpattrib.embedding import LocalHashProvider, ProviderConfig, embed_taxonomy
from ttpattrib.errors import ProviderUnavailableError
from ttpattrib.identify import IdentifyConfig
from ttpattrib.llm_extract import load_default_template
from ttpattrib.pipeline import tag_corpus
from ttpattrib.server import ServerState, create_app


def _build_state(synth) -> ServerState:
    provider = LocalHashProvider(ProviderConfig())
    emb = embed_taxonomy(synth.taxonomy, provider)
    _, doc_counts = tag_corpus(synth.corpus, emb, provider, synth.taxonomy,
                               IdentifyConfig())
    fold = make_splits(synth.corpus, seed=13).folds[0]
    matrix = train_weight_matrix(
        docs_by_actor(synth.corpus, fold.train),
        tagger=lambda d: doc_counts[d.doc_id],
        ttp_order=synth.taxonomy.ordering,
        taxonomy_fingerprint=synth.taxonomy.fingerprint(),
    )
    return ServerState(tax=synth.taxonomy, emb=emb, provider=provider, matrix=matrix)


@pytest.fixture(scope="module")
def state(synth):
    return _build_state(synth)


@pytest.fixture()
def client(state):
    state.session_priors.clear()
    return TestClient(create_app(state))


def _sample_text(synth, actor_index=0):
    doc = synth.corpus.docs[synth.corpus.actors[actor_index]][0]
    return doc.text, synth.corpus.actors[actor_index]


class TestInfoEndpoints:
    def test_health(self, client):
        assert client.get("/health").json() == {"status": "ok"}

    def test_actors(self, client, synth):
        assert client.get("/actors").json()["actors"] == list(synth.corpus.actors)

    def test_taxonomy_lists_live_techniques(self, client, synth):
        body = client.get("/taxonomy").json()
        assert len(body["techniques"]) == len(synth.taxonomy.ordering)
        assert body["fingerprint"] == synth.taxonomy.fingerprint()
        assert body["techniques"][0]["id"] == "T1000"

    def test_matrix_meta(self, client, synth):
        body = client.get("/matrix/meta").json()
        assert body["actors"] == list(synth.corpus.actors)
        assert body["n_techniques"] == len(synth.taxonomy.ordering)
        assert body["alpha"] == 0.0


class TestIdentifyEndpoint:
    def test_tags_known_text(self, client, synth):
        text, actor = _sample_text(synth)
        resp = client.post("/identify", json={"text": text})
        assert resp.status_code == 200
        body = resp.json()
        tags = body["tags"]
        assert body["method"] == "ve"
        assert len(tags) == synth.spec.ttps_per_doc
        assert all(t["ttp"] in {x.canonical for x in synth.signatures[actor]}
                   for t in tags)

    def test_counts_match_tags(self, client, synth):
        text, _ = _sample_text(synth)
        body = client.post("/identify", json={"text": text}).json()
        assert sum(body["counts"].values()) == len(
            [t for t in body["tags"] if t["ttp"] is not None])

    def test_window_override(self, client, synth):
        text, _ = _sample_text(synth)
        resp = client.post("/identify", json={"text": text, "window_lines": 1})
        assert len(resp.json()["tags"]) == len(text.splitlines())

    def test_empty_text_is_field_level_400(self, client):
        resp = client.post("/identify", json={"text": ""})
        assert resp.status_code == 400
        errors = resp.json()["errors"]
        assert errors[0]["field"] == "text"
        assert "least 1 character" in errors[0]["message"]

    def test_blank_text_rejected(self, client):
        resp = client.post("/identify", json={"text": "   \n  \n"})
        assert resp.status_code == 400
        assert "no non-blank lines" in resp.json()["error"]


class TestIdentifyLlm:
    def test_rejected_when_no_generator_configured(self, client):
        resp = client.post("/identify", json={"text": "some text", "method": "llm"})
        assert resp.status_code == 400
        assert "not configured" in resp.json()["error"]

    def test_extracts_and_classifies(self, synth):
        state = _build_state(synth)
        tid = synth.taxonomy.ordering[0]
        name = synth.taxonomy.records[tid].name
        state.generator = lambda prompt: f"['{tid.canonical}','{name}'],\n['T9999','Made Up']"
        state.template = load_default_template()
        client = TestClient(create_app(state))
        resp = client.post("/identify", json={"text": "incident text", "method": "llm"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["method"] == "llm"
        assert [e["category"] for e in body["entries"]] == ["valid", "unknown-id"]
        assert body["counts"] == {tid.canonical: 1}
        assert body["hallucination_rate"] == 0.5

    def test_ve_response_does_not_need_generator(self, client, synth):
        text, _ = _sample_text(synth)
        assert client.post("/identify", json={"text": text}).status_code == 200


class TestAttributeEndpoint:
    def test_counts_ranking_and_decomposition(self, client, synth):
        sig = sorted(synth.signatures[synth.corpus.actors[2]])[:3]
        counts = {tid.canonical: 2 for tid in sig}
        resp = client.post("/attribute", json={"counts": counts, "top_terms": 2})
        assert resp.status_code == 200
        body = resp.json()
        assert body["ranking"][0]["actor"] == synth.corpus.actors[2]
        assert body["ranking"][0]["rank"] == 1
        assert not body["prior_only"]
        top_actor_terms = body["decomposition"][synth.corpus.actors[2]]
        assert 0 < len(top_actor_terms) <= 2
        assert top_actor_terms[0]["term"] > 0
        losing = body["decomposition"][synth.corpus.actors[3]]
        assert losing == []

    def test_text_attribution(self, client, synth):
        text, actor = _sample_text(synth, actor_index=4)
        resp = client.post("/attribute", json={"text": text})
        assert resp.status_code == 200
        assert resp.json()["ranking"][0]["actor"] == actor

    def test_requires_exactly_one_payload_kind(self, client):
        assert client.post("/attribute", json={}).status_code == 400
        both = {"counts": {"T1000": 1}, "text": "x"}
        assert client.post("/attribute", json=both).status_code == 400

    def test_unknown_count_ids_reported_as_dropped(self, client):
        resp = client.post("/attribute", json={"counts": {"T9999": 3}})
        assert resp.status_code == 200
        body = resp.json()
        assert body["dropped_ttps"] == ["T9999"]
        assert body["prior_only"]

    def test_malformed_id_rejected(self, client):
        resp = client.post("/attribute", json={"counts": {"XYZ": 1}})
        assert resp.status_code == 400

    def test_inline_prior_changes_ranking(self, client, synth):
        actors = synth.corpus.actors
        resp = client.post("/attribute", json={
            "counts": {},
            "prior": {a: (1.0 if a == actors[5] else 0.01) for a in actors},
        })
        body = resp.json()
        assert body["prior_only"]
        assert body["ranking"][0]["actor"] == actors[5]

    def test_prior_must_cover_all_actors(self, client, synth):
        resp = client.post("/attribute", json={
            "counts": {}, "prior": {synth.corpus.actors[0]: 1.0},
        })
        assert resp.status_code == 400
        assert "missing actors" in resp.json()["error"]


class TestSessionPrior:
    def test_put_echoes_renormalized_prior(self, client, synth):
        actors = synth.corpus.actors
        weights = {a: 2.0 for a in actors}
        resp = client.put("/session/prior", json={"weights": weights},
                          headers={"X-Session-Id": "analyst-1"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["session"] == "analyst-1"
        assert all(abs(w - 1 / len(actors)) < 1e-12 for w in body["prior"].values())

    def test_sessions_are_isolated(self, client, synth):
        actors = synth.corpus.actors
        favored = {a: (1.0 if a == actors[1] else 0.001) for a in actors}
        client.put("/session/prior", json={"weights": favored},
                   headers={"X-Session-Id": "analyst-1"})

        resp = client.post("/attribute",
                           json={"counts": {}, "use_session_prior": True},
                           headers={"X-Session-Id": "analyst-1"})
        assert resp.json()["ranking"][0]["actor"] == actors[1]

        other = client.post("/attribute",
                            json={"counts": {}, "use_session_prior": True},
                            headers={"X-Session-Id": "analyst-2"})
        assert other.status_code == 400
        assert "no prior stored" in other.json()["error"]

    def test_default_session_header(self, client, synth):
        actors = synth.corpus.actors
        client.put("/session/prior", json={"weights": {a: 1.0 for a in actors}})
        resp = client.post("/attribute", json={"counts": {}, "use_session_prior": True})
        assert resp.status_code == 200

    def test_unknown_actor_rejected(self, client):
        resp = client.put("/session/prior", json={"weights": {"nobody": 1.0}})
        assert resp.status_code == 400
        assert "unknown actors" in resp.json()["error"]


class _DownProvider:
    config = ProviderConfig(dim=512)

    def embed(self, texts):
        raise ProviderUnavailableError("backend is down")


class TestProviderOutage:
    def test_identify_returns_503(self, synth):
        state = _build_state(synth)
        state.provider = _DownProvider()
        client = TestClient(create_app(state))
        resp = client.post("/identify", json={"text": "some report text"})
        assert resp.status_code == 503
        assert "down" in resp.json()["error"]

    def test_attribute_with_text_returns_503_but_counts_path_works(self, synth):
        state = _build_state(synth)
        state.provider = _DownProvider()
        client = TestClient(create_app(state))
        assert client.post("/attribute", json={"text": "x"}).status_code == 503
        assert client.post("/attribute", json={"counts": {"T1000": 1}}).status_code == 200


class TestStaticUi:
    def test_ui_mounted_when_directory_exists(self, state, tmp_path):
        ui = tmp_path / "dist"
        ui.mkdir()
        (ui / "index.html").write_text("<!doctype html><title>ui</title>", encoding="utf-8")
        client = TestClient(create_app(state, ui_dir=ui))
        resp = client.get("/ui/")
        assert resp.status_code == 200
        assert "ui" in resp.text

    def test_no_mount_without_directory(self, client):
        assert client.get("/ui/").status_code == 404
