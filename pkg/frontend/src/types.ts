// Payload shapes of the labeling-service HTTP API. The console renders
// these values verbatim; it never recomputes a score.

export const CLASSES = [
  "Benign",
  "BitsadminLolbin",
  "CertutilLolbin",
  "MsbuildLolbin",
  "MsiexecLolbin",
  "Regsvr32Lolbin",
] as const;

export type ClassName = (typeof CLASSES)[number];

export type Reason = "uncertain" | "anomalous";

export interface QueueItem {
  sample_id: string;
  reason: Reason;
  rank: number;
  parent_cmdline: string;
  child_cmdline: string;
  lolbin: string;
  predicted_class: string;
  posterior: Record<string, number>;
  uncertainty: number;
  anomaly: number;
  token_scores: [string, number][];
}

export interface QueueResponse {
  schema_version: number;
  session_id: string;
  iteration: number;
  items: QueueItem[];
}

export interface SessionResponse {
  schema_version: number;
  session_id: string;
  iteration: number;
  queue_size: number;
  labeled_total: number;
}

export interface LabelAck {
  schema_version: number;
  session_id: string;
  ack: { sample_id: string; label: string; remaining: number };
}

export interface SelectionAccuracy {
  uncertain: number | null;
  anomalous: number | null;
  overall: number | null;
  n_considered: number;
}

export interface IterationSummary {
  iteration: number;
  new_labels: number;
  labeled_total: number;
  queue_size: number;
  selection_accuracy: SelectionAccuracy;
}

export interface IterateResponse {
  schema_version: number;
  session_id: string;
  summary: IterationSummary;
}

export interface MetricsResponse {
  schema_version: number;
  session_id: string;
  iteration: number;
  labeled_total: number;
  history: IterationSummary[];
}

export interface ErrorResponse {
  schema_version: number;
  error: string;
}
