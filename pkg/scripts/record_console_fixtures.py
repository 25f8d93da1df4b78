#!/usr/bin/env python3
"""Record labeling-service API traffic for the console's contract tests.

Runs a scripted three-iteration session (25 uncertain + 25 anomalous per
queue, perfect oracle labels everything) against the real service and
snapshots every payload the console consumes into frontend/fixtures/.
Deterministic: fixed corpus seed, fixed session config.
"""

import json
import pathlib
import shutil
import sys
import tempfile

from fastapi.testclient import TestClient

from lolal.service import SessionConfig, SessionStore, create_app
from lolal.synth import CorpusSpec, generate_corpus, strip_labels, truth_map
from lolal.tokenizer import write_corpus

FIXTURE_DIR = pathlib.Path(__file__).resolve().parent.parent / "frontend" / "fixtures"
ITERATIONS = 3


def main() -> int:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    workdir = pathlib.Path(tempfile.mkdtemp(prefix="lolal-fixtures-"))

    labeled, pool = generate_corpus(CorpusSpec(seed=17, scale=0.4, unlabeled_size=600))
    write_corpus(str(workdir / "labeled.jsonl"), labeled)
    write_corpus(str(workdir / "pool.jsonl"), strip_labels(pool))
    truth = truth_map(pool)

    store = SessionStore(
        str(workdir / "state"),
        str(workdir / "labeled.jsonl"),
        str(workdir / "pool.jsonl"),
        default_config=SessionConfig(
            k_uncertain=25, k_anomalous=25, embedding_epochs=8, seed=17,
        ),
    )
    client = TestClient(create_app(store))

    def save(name: str, payload) -> None:
        with open(FIXTURE_DIR / name, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)

    created = client.post("/sessions", json={}).json()
    session_id = created["session_id"]
    save("session.json", created)

    for it in range(ITERATIONS):
        queue = client.get(f"/sessions/{session_id}/queue").json()
        save(f"queue_iter{it}.json", queue)

        label_log = []
        for item in queue["items"]:
            body = {
                "sample_id": item["sample_id"],
                "label": truth[item["sample_id"]],
                "analyst_id": "fixture-analyst",
            }
            response = client.post(f"/sessions/{session_id}/labels", json=body)
            label_log.append({
                "request": body,
                "status": response.status_code,
                "response": response.json(),
            })
        save(f"labels_iter{it}.json", label_log)

        summary = client.post(f"/sessions/{session_id}/iterate").json()
        save(f"iterate_iter{it}.json", summary)

    metrics = client.get(f"/sessions/{session_id}/metrics").json()
    save("metrics.json", metrics)

    journal_src = workdir / "state" / session_id / "journal.jsonl"
    shutil.copy(journal_src, FIXTURE_DIR / "journal.jsonl")

    detail = client.get(
        f"/sessions/{session_id}/samples/{queue['items'][0]['sample_id']}"
    ).json()
    save("sample_detail.json", detail)

    print(f"fixtures written to {FIXTURE_DIR}")
    for path in sorted(FIXTURE_DIR.iterdir()):
        print(f"  {path.name}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
