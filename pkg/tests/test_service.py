import threading

import pytest
from fastapi.testclient import TestClient

from lolal.service import SessionConfig, SessionStore, create_app
from lolal.synth import CorpusSpec, generate_corpus, strip_labels, truth_map
from lolal.tokenizer import write_corpus


FAST_CONFIG = SessionConfig(
    k_uncertain=5,
    k_anomalous=5,
    embedding_epochs=2,
    embedding_dim=6,
    score_trees=5,
    boost_stages=10,
    boost_depth=2,
    boost_learning_rate=0.3,
)


@pytest.fixture(scope="module")
def corpus_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    labeled, pool = generate_corpus(CorpusSpec(seed=21, scale=0.08, unlabeled_size=80))
    labeled_path = root / "labeled.jsonl"
    pool_path = root / "pool.jsonl"
    write_corpus(str(labeled_path), labeled)
    write_corpus(str(pool_path), strip_labels(pool))
    return str(labeled_path), str(pool_path), truth_map(pool)


def make_store(tmp_path, corpus_files, **config_overrides):
    labeled_path, pool_path, _ = corpus_files
    config = SessionConfig(**{**FAST_CONFIG.to_dict(), **config_overrides})
    return SessionStore(str(tmp_path), labeled_path, pool_path, default_config=config)


def make_client(store):
    return TestClient(create_app(store), raise_server_exceptions=False)


class TestSessionLifecycle:
    def test_create_session_and_queue_size(self, tmp_path, corpus_files):
        client = make_client(make_store(tmp_path, corpus_files))
        r = client.post("/sessions", json={})
        assert r.status_code == 201
        body = r.json()
        assert body["schema_version"] == 1
        assert body["queue_size"] == 10  # k_uncertain + k_anomalous

        q = client.get(f"/sessions/{body['session_id']}/queue").json()
        assert len(q["items"]) == 10
        reasons = [item["reason"] for item in q["items"]]
        assert reasons == ["uncertain"] * 5 + ["anomalous"] * 5

    def test_default_queue_is_25_plus_25(self, tmp_path, corpus_files):
        store = make_store(tmp_path, corpus_files, k_uncertain=25, k_anomalous=25)
        client = make_client(store)
        r = client.post("/sessions", json={})
        assert r.json()["queue_size"] == 50

    def test_zero_k_session_still_valid(self, tmp_path, corpus_files):
        client = make_client(make_store(tmp_path, corpus_files))
        r = client.post("/sessions", json={"k_uncertain": 0, "k_anomalous": 0})
        assert r.status_code == 201
        assert r.json()["queue_size"] == 0

    def test_queue_items_carry_commands_and_scores(self, tmp_path, corpus_files):
        client = make_client(make_store(tmp_path, corpus_files))
        sid = client.post("/sessions", json={}).json()["session_id"]
        items = client.get(f"/sessions/{sid}/queue").json()["items"]
        for item in items:
            assert item["child_cmdline"]
            assert item["predicted_class"]
            assert isinstance(item["posterior"], dict)
            assert item["token_scores"], "token-level explanation missing"
            assert all(0.0 <= s <= 1.0 for _, s in item["token_scores"])

    def test_unknown_session_404(self, tmp_path, corpus_files):
        client = make_client(make_store(tmp_path, corpus_files))
        assert client.get("/sessions/nope/queue").status_code == 404

    def test_insufficient_seed_labels(self, tmp_path, tmp_path_factory, corpus_files):
        root = tmp_path_factory.mktemp("single")
        labeled, pool = generate_corpus(CorpusSpec(seed=22, scale=0.05, unlabeled_size=20))
        only_certutil = [s for s in labeled if s.label == "CertutilLolbin"]
        labeled_path = root / "one.jsonl"
        write_corpus(str(labeled_path), only_certutil)
        store = SessionStore(str(tmp_path), str(labeled_path), None, default_config=FAST_CONFIG)
        client = make_client(store)
        r = client.post("/sessions", json={})
        assert r.status_code == 422
        assert "at least 2 classes" in r.json()["error"]


class TestLabeling:
    @pytest.fixture()
    def live(self, tmp_path, corpus_files):
        store = make_store(tmp_path, corpus_files)
        client = make_client(store)
        session_id = client.post("/sessions", json={}).json()["session_id"]
        return client, session_id, corpus_files[2]

    def test_submit_and_remaining(self, live):
        client, sid, truth = live
        items = client.get(f"/sessions/{sid}/queue").json()["items"]
        target = items[0]["sample_id"]
        r = client.post(f"/sessions/{sid}/labels", json={
            "sample_id": target, "label": truth[target], "analyst_id": "analyst-1",
        })
        assert r.status_code == 200
        assert r.json()["ack"]["remaining"] == len(items) - 1
        after = client.get(f"/sessions/{sid}/queue").json()["items"]
        assert target not in [i["sample_id"] for i in after]

    def test_duplicate_submission_rejected(self, live):
        client, sid, truth = live
        items = client.get(f"/sessions/{sid}/queue").json()["items"]
        target = items[0]["sample_id"]
        body = {"sample_id": target, "label": "Benign", "analyst_id": "a"}
        assert client.post(f"/sessions/{sid}/labels", json=body).status_code == 200
        r = client.post(f"/sessions/{sid}/labels", json=body)
        assert r.status_code == 409
        assert "already labeled" in r.json()["error"]

    def test_unknown_sample_and_label(self, live):
        client, sid, _ = live
        r = client.post(f"/sessions/{sid}/labels", json={
            "sample_id": "ghost", "label": "Benign", "analyst_id": "a",
        })
        assert r.status_code == 404
        items = client.get(f"/sessions/{sid}/queue").json()["items"]
        r = client.post(f"/sessions/{sid}/labels", json={
            "sample_id": items[0]["sample_id"], "label": "SuperBad", "analyst_id": "a",
        })
        assert r.status_code == 422

    def test_unqueued_sample_rejected(self, live):
        client, sid, truth = live
        queued = {i["sample_id"] for i in client.get(f"/sessions/{sid}/queue").json()["items"]}
        outside = next(s for s in truth if s not in queued)
        r = client.post(f"/sessions/{sid}/labels", json={
            "sample_id": outside, "label": "Benign", "analyst_id": "a",
        })
        assert r.status_code == 409

    def test_iterate_without_labels_rejected(self, live):
        client, sid, _ = live
        r = client.post(f"/sessions/{sid}/iterate")
        assert r.status_code == 409
        assert "nothing to learn" in r.json()["error"]

    def test_iterate_retrains_and_requeues(self, live):
        client, sid, truth = live
        items = client.get(f"/sessions/{sid}/queue").json()["items"]
        for item in items[:4]:
            client.post(f"/sessions/{sid}/labels", json={
                "sample_id": item["sample_id"],
                "label": truth[item["sample_id"]],
                "analyst_id": "a",
            })
        r = client.post(f"/sessions/{sid}/iterate")
        assert r.status_code == 200
        summary = r.json()["summary"]
        assert summary["iteration"] == 1
        assert summary["new_labels"] == 4
        assert set(summary["selection_accuracy"]) >= {"uncertain", "anomalous", "overall"}
        fresh = client.get(f"/sessions/{sid}/queue").json()["items"]
        labeled_ids = {i["sample_id"] for i in items[:4]}
        assert not labeled_ids & {i["sample_id"] for i in fresh}

    def test_sample_detail_and_metrics(self, live):
        client, sid, _ = live
        item = client.get(f"/sessions/{sid}/queue").json()["items"][0]
        detail = client.get(f"/sessions/{sid}/samples/{item['sample_id']}").json()["sample"]
        assert detail["status"] == "queued"
        assert detail["queue_item"]["token_scores"]
        metrics = client.get(f"/sessions/{sid}/metrics").json()
        assert metrics["history"] == []
        assert metrics["schema_version"] == 1


class TestDurability:
    def test_restart_restores_identical_queue(self, tmp_path, corpus_files):
        store1 = make_store(tmp_path / "state", corpus_files)
        client1 = make_client(store1)
        sid = client1.post("/sessions", json={}).json()["session_id"]
        items_before = client1.get(f"/sessions/{sid}/queue").json()["items"]
        truth = corpus_files[2]
        for item in items_before[:3]:
            client1.post(f"/sessions/{sid}/labels", json={
                "sample_id": item["sample_id"],
                "label": truth[item["sample_id"]],
                "analyst_id": "a",
            })
        expected = client1.get(f"/sessions/{sid}/queue").json()["items"]

        # a fresh store over the same directory = process restart
        store2 = SessionStore(
            str(tmp_path / "state"), corpus_files[0], corpus_files[1],
            default_config=FAST_CONFIG,
        )
        client2 = make_client(store2)
        restored = client2.get(f"/sessions/{sid}/queue").json()["items"]
        assert restored == expected

        # and the staged labels survived: iterate works without resubmission
        r = client2.post(f"/sessions/{sid}/iterate")
        assert r.status_code == 200
        assert r.json()["summary"]["new_labels"] == 3

    def test_restart_after_iterate(self, tmp_path, corpus_files):
        store1 = make_store(tmp_path / "state2", corpus_files)
        client1 = make_client(store1)
        sid = client1.post("/sessions", json={}).json()["session_id"]
        truth = corpus_files[2]
        items = client1.get(f"/sessions/{sid}/queue").json()["items"]
        for item in items[:2]:
            client1.post(f"/sessions/{sid}/labels", json={
                "sample_id": item["sample_id"],
                "label": truth[item["sample_id"]],
                "analyst_id": "a",
            })
        client1.post(f"/sessions/{sid}/iterate")
        expected = client1.get(f"/sessions/{sid}/queue").json()["items"]

        store2 = SessionStore(
            str(tmp_path / "state2"), corpus_files[0], corpus_files[1],
            default_config=FAST_CONFIG,
        )
        client2 = make_client(store2)
        assert client2.get(f"/sessions/{sid}/queue").json()["items"] == expected
        assert client2.get(f"/sessions/{sid}/metrics").json()["history"] \
            == client1.get(f"/sessions/{sid}/metrics").json()["history"]


class TestConcurrency:
    def test_same_sample_single_winner(self, tmp_path, corpus_files):
        store = make_store(tmp_path, corpus_files)
        session = store.create({})
        target = session.queue[0].sample_id
        results = []

        def submit(label):
            try:
                session.submit_label(target, label, "racer")
                results.append("ok")
            except Exception:
                results.append("rejected")

        threads = [
            threading.Thread(target=submit, args=("Benign" if i % 2 else "CertutilLolbin",))
            for i in range(8)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results.count("ok") == 1
        assert results.count("rejected") == 7

    def test_distinct_samples_all_succeed(self, tmp_path, corpus_files):
        store = make_store(tmp_path, corpus_files)
        session = store.create({})
        targets = [item.sample_id for item in session.queue[:6]]
        outcomes = []

        def submit(sid):
            try:
                session.submit_label(sid, "Benign", "racer")
                outcomes.append("ok")
            except Exception:
                outcomes.append("fail")

        threads = [threading.Thread(target=submit, args=(sid,)) for sid in targets]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert outcomes == ["ok"] * 6


class TestScriptedOracleTrend:
    def test_three_iterations_accuracy_direction(self, tmp_path, corpus_files):
        # a scripted perfect analyst labels the whole queue for 3 iterations;
        # the accuracy of predicted-malicious selections should trend upward
        store = make_store(tmp_path, corpus_files, k_uncertain=8, k_anomalous=8)
        client = make_client(store)
        sid = client.post("/sessions", json={}).json()["session_id"]
        truth = corpus_files[2]
        overall = []
        for _ in range(3):
            items = client.get(f"/sessions/{sid}/queue").json()["items"]
            for item in items:
                client.post(f"/sessions/{sid}/labels", json={
                    "sample_id": item["sample_id"],
                    "label": truth[item["sample_id"]],
                    "analyst_id": "oracle",
                })
            summary = client.post(f"/sessions/{sid}/iterate").json()["summary"]
            acc = summary["selection_accuracy"]["overall"]
            overall.append(acc if acc is not None else 0.0)
        assert overall[-1] >= overall[0]
        history = client.get(f"/sessions/{sid}/metrics").json()["history"]
        assert len(history) == 3
        for record in history:
            assert "uncertain" in record["selection_accuracy"]
            assert "anomalous" in record["selection_accuracy"]
