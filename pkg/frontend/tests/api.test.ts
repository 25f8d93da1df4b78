import { describe, expect, it } from "vitest";

import { ServiceClient, ServiceRejection, ServiceUnreachable } from "../src/api.js";
import { jsonResponse } from "./helpers.js";

describe("ServiceClient", () => {
  it("posts labels individually with the expected body", async () => {
    const calls: { url: string; init?: RequestInit }[] = [];
    const client = new ServiceClient("http://svc:8000/", async (url, init) => {
      calls.push({ url, init });
      return jsonResponse({
        schema_version: 1,
        session_id: "s",
        ack: { sample_id: "U1", label: "Benign", remaining: 4 },
      });
    });
    const ack = await client.submitLabel("sess", "U1", "Benign", "me");
    expect(ack.ack.remaining).toBe(4);
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("http://svc:8000/sessions/sess/labels");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({
      sample_id: "U1",
      label: "Benign",
      analyst_id: "me",
    });
  });

  it("surfaces server rejections with the service message", async () => {
    const client = new ServiceClient("http://svc", async () =>
      jsonResponse({ schema_version: 1, error: "sample 'U1' already labeled" }, 409),
    );
    await expect(client.submitLabel("s", "U1", "Benign", "me")).rejects.toThrowError(
      ServiceRejection,
    );
    await expect(client.submitLabel("s", "U1", "Benign", "me")).rejects.toThrow(
      /already labeled/,
    );
  });

  it("wraps network failures as unreachable", async () => {
    const client = new ServiceClient("http://svc", async () => {
      throw new TypeError("fetch failed");
    });
    await expect(client.getQueue("s")).rejects.toThrowError(ServiceUnreachable);
  });

  it("creates sessions and reads metrics", async () => {
    const client = new ServiceClient("http://svc", async (url, init) => {
      if (url.endsWith("/sessions")) {
        expect(init?.method).toBe("POST");
        return jsonResponse({
          schema_version: 1, session_id: "abc", iteration: 0,
          queue_size: 50, labeled_total: 100,
        }, 201);
      }
      return jsonResponse({
        schema_version: 1, session_id: "abc", iteration: 0,
        labeled_total: 100, history: [],
      });
    });
    const created = await client.createSession();
    expect(created.session_id).toBe("abc");
    const metrics = await client.getMetrics("abc");
    expect(metrics.history).toEqual([]);
  });
});
