// Pure view-model helpers. Everything here reshapes or formats service
// payloads; no probability, uncertainty or anomaly value is ever
// recomputed on the client.

import { CLASSES } from "./types.js";
import type { IterationSummary, QueueItem, Reason } from "./types.js";

export const HIGHLIGHT_THRESHOLD = 0.9;

export interface ClassGroup {
  className: string;
  items: QueueItem[];
}

export interface GroupedQueue {
  uncertain: ClassGroup[];
  anomalous: ClassGroup[];
  total: number;
}

/** Group queue items by reason tag, then by predicted class, preserving
 * the service's ranking order inside each group. */
export function groupQueue(items: QueueItem[]): GroupedQueue {
  const byReason: Record<Reason, Map<string, QueueItem[]>> = {
    uncertain: new Map(),
    anomalous: new Map(),
  };
  for (const item of items) {
    const groups = byReason[item.reason];
    if (!groups.has(item.predicted_class)) {
      groups.set(item.predicted_class, []);
    }
    groups.get(item.predicted_class)!.push(item);
  }
  const toGroups = (m: Map<string, QueueItem[]>): ClassGroup[] =>
    [...m.entries()].map(([className, groupItems]) => ({ className, items: groupItems }));
  return {
    uncertain: toGroups(byReason.uncertain),
    anomalous: toGroups(byReason.anomalous),
    total: items.length,
  };
}

export function reasonCounts(items: QueueItem[]): { uncertain: number; anomalous: number } {
  return {
    uncertain: items.filter((i) => i.reason === "uncertain").length,
    anomalous: items.filter((i) => i.reason === "anomalous").length,
  };
}

/** Tokens whose service-side score clears the highlight threshold. */
export function highlightedTokens(
  tokenScores: [string, number][],
  threshold: number = HIGHLIGHT_THRESHOLD,
): Set<string> {
  const hot = new Set<string>();
  for (const [token, score] of tokenScores) {
    if (score >= threshold) {
      hot.add(token);
    }
  }
  return hot;
}

/** Posterior entries sorted by probability, values passed through as-is. */
export function posteriorEntries(posterior: Record<string, number>): [string, number][] {
  return Object.entries(posterior).sort((a, b) => b[1] - a[1]);
}

/** One key per class: press the digit to assign that label. */
export function labelHotkeys(classes: readonly string[] = CLASSES): Map<string, string> {
  const keys = new Map<string, string>();
  classes.forEach((cls, i) => keys.set(String(i + 1), cls));
  return keys;
}

export interface AccuracyRow {
  iteration: number;
  uncertain: number | null;
  anomalous: number | null;
  overall: number | null;
}

/** The per-reason selection-accuracy panel, straight from service data. */
export function accuracyPanel(history: IterationSummary[]): AccuracyRow[] {
  return history.map((record) => ({
    iteration: record.iteration,
    uncertain: record.selection_accuracy.uncertain,
    anomalous: record.selection_accuracy.anomalous,
    overall: record.selection_accuracy.overall,
  }));
}

export function formatAccuracy(value: number | null): string {
  return value === null ? "n/a" : value.toFixed(2);
}

export function formatScore(value: number): string {
  return value.toFixed(3);
}
