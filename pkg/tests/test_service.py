import time

import pytest
from fastapi.testclient import TestClient

from argal.config import RunConfig, parse_config_text
from argal.corpus import write_corpus
from argal.embeddings import save_embedding_table
from argal.engine import run_single
from argal.service import create_app

from conftest import tiny_corpus, tiny_table


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    corpus = tiny_corpus(n_per_topic=30, seed=4)
    table = tiny_table(corpus)
    write_corpus(root / "corpus.tsv", list(corpus))
    save_embedding_table(root / "vectors.txt", table)
    return root, corpus


def config_text(root, **overrides):
    values = {
        "corpus": str(root / "corpus.tsv"),
        "embeddings": f"static:{root / 'vectors.txt'}",
        "model": "lincrf",
        "strategy": "random",
        "seeds": "5",
        "batch_size": "8",
        "budget": "16",
        "oracle": "human",
        "output": str(root / "sessions"),
        "max_epochs": "4",
        "min_epochs": "2",
        "patience": "2",
    }
    values.update(overrides)
    return "\n".join(f"{k} = {v}" for k, v in values.items()) + "\n"


@pytest.fixture()
def client(dataset):
    root, _ = dataset
    text = config_text(root)
    config = RunConfig.from_values(parse_config_text(text), raw_text=text)
    app = create_app(config, base_dir=root)
    return TestClient(app)


def wait_not_training(client, sid, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/sessions/{sid}/status").json()
        if status["status"] != "training":
            return status
        time.sleep(0.02)
    raise TimeoutError("training did not finish")


def label_batch_with_gold(client, sid, corpus):
    batch = client.get(f"/sessions/{sid}/batch").json()
    for item in batch["items"]:
        gold = list(corpus.by_id(item["id"]).gold_labels)
        response = client.post(f"/sessions/{sid}/labels", json={"id": item["id"], "labels": gold})
        assert response.status_code == 200, response.json()
    return batch


class TestSessionLifecycle:
    def test_create_returns_id_and_status(self, client):
        response = client.post("/sessions", json={"config": {}})
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "awaiting_labels"
        assert body["id"]

    def test_two_creates_distinct_ids(self, client):
        a = client.post("/sessions", json={"config": {}}).json()["id"]
        b = client.post("/sessions", json={"config": {}}).json()["id"]
        assert a != b

    def test_invalid_strategy_names_field(self, client):
        response = client.post("/sessions", json={"config": {"strategy": "nope"}})
        assert response.status_code == 400
        assert response.json()["field"] == "strategy"

    def test_gold_oracle_config_rejected(self, client):
        response = client.post("/sessions", json={"config": {"oracle": "gold"}})
        assert response.status_code == 400
        assert response.json()["field"] == "oracle"


class TestBatchEndpoint:
    def test_batch_size_and_no_gold(self, client):
        sid = client.post("/sessions", json={"config": {}}).json()["id"]
        batch = client.get(f"/sessions/{sid}/batch").json()
        assert len(batch["items"]) == 8
        for item in batch["items"]:
            assert set(item) == {"id", "tokens", "topic", "submitted"}
        assert "gold" not in batch and "labels" not in batch

    def test_repeated_get_idempotent(self, client):
        sid = client.post("/sessions", json={"config": {}}).json()["id"]
        a = client.get(f"/sessions/{sid}/batch").json()
        b = client.get(f"/sessions/{sid}/batch").json()
        assert a == b

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/zzz/batch").status_code == 404


class TestSubmitLabels:
    def test_wrong_length_422(self, client, dataset):
        _, corpus = dataset
        sid = client.post("/sessions", json={"config": {}}).json()["id"]
        item = client.get(f"/sessions/{sid}/batch").json()["items"][0]
        response = client.post(
            f"/sessions/{sid}/labels", json={"id": item["id"], "labels": ["NON"] * 99}
        )
        assert response.status_code == 422

    def test_unknown_label_422(self, client):
        sid = client.post("/sessions", json={"config": {}}).json()["id"]
        item = client.get(f"/sessions/{sid}/batch").json()["items"][0]
        labels = ["WAT"] * len(item["tokens"])
        response = client.post(f"/sessions/{sid}/labels", json={"id": item["id"], "labels": labels})
        assert response.status_code == 422

    def test_unknown_id_404(self, client):
        sid = client.post("/sessions", json={"config": {}}).json()["id"]
        response = client.post(f"/sessions/{sid}/labels", json={"id": "ghost", "labels": ["NON"]})
        assert response.status_code == 404

    def test_duplicate_submission_409(self, client, dataset):
        _, corpus = dataset
        sid = client.post("/sessions", json={"config": {}}).json()["id"]
        item = client.get(f"/sessions/{sid}/batch").json()["items"][0]
        gold = list(corpus.by_id(item["id"]).gold_labels)
        assert client.post(f"/sessions/{sid}/labels", json={"id": item["id"], "labels": gold}).status_code == 200
        response = client.post(f"/sessions/{sid}/labels", json={"id": item["id"], "labels": gold})
        assert response.status_code == 409

    def test_last_submission_triggers_training(self, client, dataset):
        _, corpus = dataset
        sid = client.post("/sessions", json={"config": {}}).json()["id"]
        batch = client.get(f"/sessions/{sid}/batch").json()
        for idx, item in enumerate(batch["items"]):
            gold = list(corpus.by_id(item["id"]).gold_labels)
            response = client.post(f"/sessions/{sid}/labels", json={"id": item["id"], "labels": gold})
            body = response.json()
            assert body["remaining"] == len(batch["items"]) - idx - 1
        status = client.get(f"/sessions/{sid}/status").json()
        assert status["status"] in ("training", "awaiting_labels", "finished")
        status = wait_not_training(client, sid)
        assert status["status"] == "awaiting_labels"
        assert len(status["curve"]) == 1

    def test_batch_blocked_while_not_awaiting(self, client, dataset):
        _, corpus = dataset
        sid = client.post("/sessions", json={"config": {}}).json()["id"]
        label_batch_with_gold(client, sid, corpus)
        wait_not_training(client, sid)
        label_batch_with_gold(client, sid, corpus)
        status = wait_not_training(client, sid)
        assert status["status"] == "finished"  # budget 16 exhausted
        response = client.get(f"/sessions/{sid}/batch")
        assert response.status_code == 409


class TestStatusAndCurve:
    def test_invariants_across_calls(self, client, dataset):
        _, corpus = dataset
        sid = client.post("/sessions", json={"config": {}}).json()["id"]
        before = client.get(f"/sessions/{sid}/status").json()
        label_batch_with_gold(client, sid, corpus)
        after = wait_not_training(client, sid)
        assert before["labeled"] + before["unlabeled"] == after["labeled"] + after["unlabeled"]
        assert after["episode"] == len(after["curve"])
        assert after["status"] in ("awaiting_labels", "training", "idle", "finished")

    def test_curve_endpoint_matches_status(self, client, dataset):
        _, corpus = dataset
        sid = client.post("/sessions", json={"config": {}}).json()["id"]
        label_batch_with_gold(client, sid, corpus)
        wait_not_training(client, sid)
        curve = client.get(f"/sessions/{sid}/curve").json()
        status = client.get(f"/sessions/{sid}/status").json()
        assert [p["labeled_count"] for p in curve] == [
            p["labeled_count"] for p in status["curve"]
        ]


class TestOracleEquivalence:
    def test_human_gold_labels_reproduce_cli_run(self, dataset):
        root, corpus = dataset
        text = config_text(root, strategy="uncertainty-entropy", seeds="9", budget="24")
        config = RunConfig.from_values(parse_config_text(text), raw_text=text)
        app = create_app(config, base_dir=root)
        client = TestClient(app)
        sid = client.post("/sessions", json={"config": {}}).json()["id"]
        while True:
            status = client.get(f"/sessions/{sid}/status").json()
            if status["status"] == "finished":
                break
            label_batch_with_gold(client, sid, corpus)
            wait_not_training(client, sid)
        service_curve = client.get(f"/sessions/{sid}/curve").json()

        gold_config = RunConfig.from_values(
            parse_config_text(config_text(root, strategy="uncertainty-entropy", seeds="9",
                                          budget="24", oracle="gold")),
        )
        curve = run_single(gold_config.build_data(), gold_config.run_spec(), seed=9)
        assert [(p["labeled_count"], p["dev_macro_f1"]) for p in service_curve] == [
            (p.labeled_count, p.dev_macro_f1) for p in curve
        ]


class TestPersistence:
    def test_session_resumes_from_disk(self, dataset, tmp_path):
        root, corpus = dataset
        store = tmp_path / "store"
        text = config_text(root, output=str(store))
        config = RunConfig.from_values(parse_config_text(text), raw_text=text)
        app = create_app(config, base_dir=root)
        client = TestClient(app)
        sid = client.post("/sessions", json={"config": {}}).json()["id"]
        batch = client.get(f"/sessions/{sid}/batch").json()
        first = batch["items"][0]
        gold = list(corpus.by_id(first["id"]).gold_labels)
        client.post(f"/sessions/{sid}/labels", json={"id": first["id"], "labels": gold})
        assert (store / f"session-{sid}.json").exists()

        # a fresh app instance picks the session up from disk
        app2 = create_app(config, base_dir=root)
        client2 = TestClient(app2)
        status = client2.get(f"/sessions/{sid}/status").json()
        assert status["status"] == "awaiting_labels"
        batch2 = client2.get(f"/sessions/{sid}/batch").json()
        assert [i["id"] for i in batch2["items"]] == [i["id"] for i in batch["items"]]
        assert batch2["remaining"] == len(batch["items"]) - 1
        # the already-submitted sentence is still marked submitted
        assert [i for i in batch2["items"] if i["id"] == first["id"]][0]["submitted"]

    def test_resumed_session_completes_identically(self, dataset, tmp_path):
        root, corpus = dataset
        store = tmp_path / "store2"
        text = config_text(root, output=str(store), seeds="11")
        config = RunConfig.from_values(parse_config_text(text), raw_text=text)

        client1 = TestClient(create_app(config, base_dir=root))
        sid = client1.post("/sessions", json={"config": {}}).json()["id"]
        label_batch_with_gold(client1, sid, corpus)
        wait_not_training(client1, sid)

        # resume in a new app and finish the run there
        client2 = TestClient(create_app(config, base_dir=root))
        while True:
            status = client2.get(f"/sessions/{sid}/status").json()
            if status["status"] == "finished":
                break
            label_batch_with_gold(client2, sid, corpus)
            wait_not_training(client2, sid)
        service_curve = client2.get(f"/sessions/{sid}/curve").json()

        gold_config = RunConfig.from_values(
            parse_config_text(config_text(root, seeds="11", oracle="gold"))
        )
        curve = run_single(gold_config.build_data(), gold_config.run_spec(), seed=11)
        assert [(p["labeled_count"], p["dev_macro_f1"]) for p in service_curve] == [
            (p.labeled_count, p.dev_macro_f1) for p in curve
        ]
