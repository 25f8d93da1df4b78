// DOM behavior of the console against a faked service endpoint (the real
// client code runs; only fetch is stubbed, serving recorded fixtures).

import { beforeEach, describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { ConsoleApp } from "../src/app.js";
import type { QueueItem, QueueResponse } from "../src/types.js";
import { fixture, jsonResponse } from "./helpers.js";

interface FakeState {
  items: QueueItem[];
  history: unknown[];
  submitted: { sample_id: string; label: string; analyst_id: string }[];
  offline: boolean;
  rejectNext: string | null;
  iterateCount: number;
}

function fakeService(state: FakeState) {
  return async (url: string, init?: RequestInit): Promise<Response> => {
    if (state.offline) {
      throw new TypeError("fetch failed");
    }
    if (url.endsWith("/sessions") && init?.method === "POST") {
      return jsonResponse({
        schema_version: 1, session_id: "fix", iteration: 0,
        queue_size: state.items.length, labeled_total: 100,
      }, 201);
    }
    if (url.endsWith("/queue")) {
      return jsonResponse({
        schema_version: 1, session_id: "fix", iteration: 0, items: state.items,
      });
    }
    if (url.endsWith("/labels")) {
      const body = JSON.parse(String(init?.body));
      if (state.rejectNext === body.sample_id) {
        state.rejectNext = null;
        return jsonResponse(
          { schema_version: 1, error: `sample '${body.sample_id}' already labeled` },
          409,
        );
      }
      state.submitted.push(body);
      state.items = state.items.filter((i) => i.sample_id !== body.sample_id);
      return jsonResponse({
        schema_version: 1, session_id: "fix",
        ack: { sample_id: body.sample_id, label: body.label, remaining: state.items.length },
      });
    }
    if (url.endsWith("/iterate")) {
      state.iterateCount += 1;
      const summary = {
        iteration: state.iterateCount, new_labels: state.submitted.length,
        labeled_total: 100 + state.submitted.length, queue_size: state.items.length,
        selection_accuracy: {
          uncertain: 0.75, anomalous: 0.5, overall: 0.7, n_considered: 10,
        },
      };
      state.history.push(summary);
      return jsonResponse({ schema_version: 1, session_id: "fix", summary });
    }
    if (url.endsWith("/metrics")) {
      return jsonResponse({
        schema_version: 1, session_id: "fix", iteration: state.iterateCount,
        labeled_total: 100, history: state.history,
      });
    }
    throw new Error(`unhandled url ${url}`);
  };
}

function makeApp(state: FakeState) {
  const root = document.createElement("main");
  document.body.appendChild(root);
  const client = new ServiceClient("http://svc", fakeService(state));
  return new ConsoleApp(client, root, document, "tester");
}

let state: FakeState;

beforeEach(() => {
  document.body.innerHTML = "";
  const queue = fixture<QueueResponse>("queue_iter0.json");
  state = {
    items: [...queue.items],
    history: [],
    submitted: [],
    offline: false,
    rejectNext: null,
    iterateCount: 0,
  };
});

describe("queue rendering", () => {
  it("renders one card per pending item, grouped 25/25 by reason", async () => {
    const app = makeApp(state);
    await app.start();
    const cards = document.querySelectorAll(".item");
    expect(cards.length).toBe(50);
    const headings = [...document.querySelectorAll(".reason-group h2")].map(
      (h) => h.textContent,
    );
    expect(headings).toEqual(["uncertain (25)", "anomalous (25)"]);
  });

  it("highlights tokens the service scored at or above the threshold", async () => {
    // ensure at least one hot token exists in the fixture queue
    const hasHot = state.items.some((i) => i.token_scores.some(([, s]) => s >= 0.9));
    expect(hasHot).toBe(true);
    const app = makeApp(state);
    await app.start();
    expect(document.querySelectorAll(".hot-token").length).toBeGreaterThan(0);
  });

  it("shows the advance prompt when the queue is empty", async () => {
    state.items = [];
    const app = makeApp(state);
    await app.start();
    expect(document.querySelector(".advance-prompt")).not.toBeNull();
    expect(document.querySelector(".item")).toBeNull();
  });
});

describe("labeling", () => {
  it("a digit key labels the selected item and updates the journal", async () => {
    const app = makeApp(state);
    await app.start();
    const target = state.items[0].sample_id;
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "1" }));
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(state.submitted).toEqual([
      { sample_id: target, label: "Benign", analyst_id: "tester" },
    ]);
    expect(document.querySelectorAll(".item").length).toBe(49);
    const journal = [...document.querySelectorAll(".journal-entry")];
    expect(journal.map((n) => n.textContent)).toEqual([`${target} -> Benign`]);
  });

  it("a rejected label keeps the item visible with an inline error", async () => {
    const app = makeApp(state);
    await app.start();
    const target = state.items[0].sample_id;
    state.rejectNext = target;
    await app.submitLabel(target, "Benign");
    expect(document.querySelectorAll(".item").length).toBe(50);
    const error = document.querySelector(`[data-sample-id="${target}"] .item-error`);
    expect(error?.textContent).toMatch(/already labeled/);
    expect(state.submitted).toHaveLength(0);
  });

  it("an offline submission is queued behind a retry banner, not lost", async () => {
    const app = makeApp(state);
    await app.start();
    const target = state.items[0].sample_id;
    state.offline = true;
    await app.submitLabel(target, "CertutilLolbin");
    expect(document.querySelector(".banner")?.textContent).toMatch(/queued/);
    expect(state.submitted).toHaveLength(0);

    state.offline = false;
    await app.retryPending();
    expect(state.submitted).toEqual([
      { sample_id: target, label: "CertutilLolbin", analyst_id: "tester" },
    ]);
    expect(document.querySelector(".banner")).toBeNull();
  });
});

describe("iterate and metrics", () => {
  it("advancing appends one accuracy row from service data", async () => {
    const app = makeApp(state);
    await app.start();
    expect(document.querySelectorAll(".accuracy-row").length).toBe(0);
    await app.submitLabel(state.items[0].sample_id, "Benign");
    await app.advanceIteration();
    const rows = document.querySelectorAll(".accuracy-row");
    expect(rows.length).toBe(1);
    expect(rows[0].textContent).toContain("0.75");
    expect(rows[0].textContent).toContain("0.50");
    expect(rows[0].textContent).toContain("0.70");
  });

  it("an offline iterate warns and retries without losing the action", async () => {
    const app = makeApp(state);
    await app.start();
    await app.submitLabel(state.items[0].sample_id, "Benign");
    state.offline = true;
    await app.advanceIteration();
    expect(document.querySelector(".banner")?.textContent).toMatch(/queued/);
    expect(state.iterateCount).toBe(0);
    state.offline = false;
    await app.retryPending();
    expect(state.iterateCount).toBe(1);
    expect(document.querySelectorAll(".accuracy-row").length).toBe(1);
  });
});
