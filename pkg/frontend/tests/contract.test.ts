// Contract tests against payloads recorded from the real service: the
// console's view of the queue, the label journal and the accuracy panel
// must match the service exactly, with no client-side recomputation.

import { describe, expect, it } from "vitest";

import {
  accuracyPanel,
  groupQueue,
  highlightedTokens,
  posteriorEntries,
  reasonCounts,
} from "../src/model.js";
import type {
  IterateResponse,
  MetricsResponse,
  QueueItem,
  QueueResponse,
} from "../src/types.js";
import { fixture, fixtureLines } from "./helpers.js";

interface LabelLogEntry {
  request: { sample_id: string; label: string; analyst_id: string };
  status: number;
  response: { ack: { sample_id: string; label: string; remaining: number } };
}

const ITERATIONS = [0, 1, 2] as const;

describe("queue contract", () => {
  for (const it_ of ITERATIONS) {
    it(`iteration ${it_}: rendered count and 25/25 reason grouping`, () => {
      const queue = fixture<QueueResponse>(`queue_iter${it_}.json`);
      const grouped = groupQueue(queue.items);
      expect(grouped.total).toBe(queue.items.length);
      const counts = reasonCounts(queue.items);
      expect(counts.uncertain).toBe(25);
      expect(counts.anomalous).toBe(25);
      const uncertainTotal = grouped.uncertain.reduce((n, g) => n + g.items.length, 0);
      const anomalousTotal = grouped.anomalous.reduce((n, g) => n + g.items.length, 0);
      expect(uncertainTotal).toBe(25);
      expect(anomalousTotal).toBe(25);
    });
  }

  it("grouping preserves every item exactly once", () => {
    const queue = fixture<QueueResponse>("queue_iter0.json");
    const grouped = groupQueue(queue.items);
    const seen = [...grouped.uncertain, ...grouped.anomalous].flatMap((g) =>
      g.items.map((i) => i.sample_id),
    );
    expect(seen.sort()).toEqual(queue.items.map((i) => i.sample_id).sort());
  });

  it("displayed scores round-trip from the payload untouched", () => {
    const queue = fixture<QueueResponse>("queue_iter0.json");
    for (const item of queue.items) {
      // posterior entries are reordered for display but values are identical
      const shown = posteriorEntries(item.posterior);
      for (const [cls, prob] of shown) {
        expect(prob).toBe(item.posterior[cls]);
      }
      // highlighting uses the service's token scores as-is
      const hot = highlightedTokens(item.token_scores, 0.9);
      for (const [token, score] of item.token_scores) {
        expect(hot.has(token)).toBe(score >= 0.9);
      }
    }
  });
});

describe("label journal contract", () => {
  it("every submitted label appears in the service journal, in order", () => {
    const submitted: { sample_id: string; label: string; analyst_id: string }[] = [];
    for (const it_ of ITERATIONS) {
      const log = fixture<LabelLogEntry[]>(`labels_iter${it_}.json`);
      for (const entry of log) {
        expect(entry.status).toBe(200);
        expect(entry.response.ack.sample_id).toBe(entry.request.sample_id);
        expect(entry.response.ack.label).toBe(entry.request.label);
        submitted.push(entry.request);
      }
    }
    const journal = fixtureLines("journal.jsonl").map(
      (line) => JSON.parse(line) as { sample_id: string; label: string; analyst_id: string },
    );
    expect(journal.length).toBe(submitted.length);
    journal.forEach((entry, i) => {
      expect(entry.sample_id).toBe(submitted[i].sample_id);
      expect(entry.label).toBe(submitted[i].label);
      expect(entry.analyst_id).toBe(submitted[i].analyst_id);
    });
  });

  it("remaining counts decrement to zero within each iteration", () => {
    for (const it_ of ITERATIONS) {
      const log = fixture<LabelLogEntry[]>(`labels_iter${it_}.json`);
      log.forEach((entry, i) => {
        expect(entry.response.ack.remaining).toBe(log.length - 1 - i);
      });
    }
  });
});

describe("accuracy panel contract", () => {
  it("the 3-iteration per-reason panel equals service data verbatim", () => {
    const metrics = fixture<MetricsResponse>("metrics.json");
    const rows = accuracyPanel(metrics.history);
    expect(rows.length).toBe(3);
    for (const it_ of ITERATIONS) {
      const iterate = fixture<IterateResponse>(`iterate_iter${it_}.json`);
      const expected = iterate.summary.selection_accuracy;
      const row = rows[it_];
      expect(row.iteration).toBe(iterate.summary.iteration);
      expect(row.uncertain).toBe(expected.uncertain);
      expect(row.anomalous).toBe(expected.anomalous);
      expect(row.overall).toBe(expected.overall);
    }
  });

  it("queue refills after each iteration", () => {
    for (const it_ of ITERATIONS) {
      const iterate = fixture<IterateResponse>(`iterate_iter${it_}.json`);
      expect(iterate.summary.new_labels).toBe(50);
      expect(iterate.summary.queue_size).toBe(50);
    }
  });
});

describe("schema", () => {
  it("all recorded payloads carry the schema version", () => {
    const names = [
      "session.json",
      "queue_iter0.json",
      "metrics.json",
      "iterate_iter0.json",
      "sample_detail.json",
    ];
    for (const name of names) {
      const payload = fixture<{ schema_version: number }>(name);
      expect(payload.schema_version).toBe(1);
    }
  });

  it("queue items expose both command lines and the predicted class", () => {
    const queue = fixture<QueueResponse>("queue_iter0.json");
    for (const item of queue.items as QueueItem[]) {
      expect(typeof item.parent_cmdline).toBe("string");
      expect(item.child_cmdline.length).toBeGreaterThan(0);
      expect(item.predicted_class.length).toBeGreaterThan(0);
      expect(item.token_scores.length).toBeGreaterThan(0);
    }
  });
});
