#!/usr/bin/env python3
# Drive the labeling service the way the browser console does, but with a
# scripted analyst: create a session, review the uncertain/anomalous
# queue, submit labels, advance, and watch the per-reason accuracy panel.

import tempfile

from fastapi.testclient import TestClient

from lolal.service import SessionConfig, SessionStore, create_app
from lolal.synth import CorpusSpec, generate_corpus, strip_labels, truth_map
from lolal.tokenizer import write_corpus

workdir = tempfile.mkdtemp(prefix="lolal-demo-")
labeled, pool = generate_corpus(CorpusSpec(seed=4, scale=0.3, unlabeled_size=400))
write_corpus(f"{workdir}/labeled.jsonl", labeled)
write_corpus(f"{workdir}/pool.jsonl", strip_labels(pool))
truth = truth_map(pool)

store = SessionStore(
    f"{workdir}/state", f"{workdir}/labeled.jsonl", f"{workdir}/pool.jsonl",
    default_config=SessionConfig(k_uncertain=25, k_anomalous=25, embedding_epochs=8),
)
client = TestClient(create_app(store))

session = client.post("/sessions", json={}).json()
sid = session["session_id"]
print(f"session {sid}: bootstrap {session['labeled_total']} labels, "
      f"queue of {session['queue_size']}")

for round_no in range(1, 4):
    items = client.get(f"/sessions/{sid}/queue").json()["items"]
    uncertain = [i for i in items if i["reason"] == "uncertain"]
    anomalous = [i for i in items if i["reason"] == "anomalous"]
    print(f"\n-- iteration {round_no}: {len(uncertain)} uncertain + "
          f"{len(anomalous)} anomalous queued")
    show = items[0]
    hot = [t for t, s in show["token_scores"] if s >= 0.9]
    print(f"   top item [{show['reason']}] predicted {show['predicted_class']}:")
    print(f"     {show['child_cmdline']}")
    print(f"     suspicious tokens: {hot or '(none above 0.9)'}")

    # the scripted analyst reviews everything with ground truth
    for item in items:
        client.post(f"/sessions/{sid}/labels", json={
            "sample_id": item["sample_id"],
            "label": truth[item["sample_id"]],
            "analyst_id": "scripted-analyst",
        })
    summary = client.post(f"/sessions/{sid}/iterate").json()["summary"]
    acc = summary["selection_accuracy"]
    fmt = lambda v: "  n/a" if v is None else f"{v:.2f}"
    print(f"   accuracy of predicted-malicious selections: "
          f"uncertain {fmt(acc['uncertain'])}  anomalous {fmt(acc['anomalous'])}  "
          f"overall {fmt(acc['overall'])}")

history = client.get(f"/sessions/{sid}/metrics").json()["history"]
print("\naccuracy panel over iterations (uncertain / anomalous / overall):")
for record in history:
    acc = record["selection_accuracy"]
    row = " / ".join(
        "n/a" if acc[k] is None else f"{acc[k]:.2f}"
        for k in ("uncertain", "anomalous", "overall")
    )
    print(f"  iteration {record['iteration']}: {row}")
print(f"\nsession state persisted under {workdir}/state")
