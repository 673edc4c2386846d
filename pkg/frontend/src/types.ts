/**
 * Wire types for the labeling service.
 *
 * These mirror the JSON payloads exactly; the console never invents
 * fields the server does not send. The one client-side addition is
 * PendingItem.chosen_label, which carries the local draft until the
 * batch is submitted.
 */

export type LabelValue = "benign" | "malicious";

export type Origin = "suspicion" | "exemplar";

/** Attack classes the server accepts on a malicious label. */
export const ATTACK_CLASSES = ["sqli", "xss", "dt", "rfi"] as const;

export type AttackClass = (typeof ATTACK_CLASSES)[number];

/**
 * What the picker offers. "other" is a console convenience: it submits
 * as malicious with no attack_class, since the server only stores the
 * four known classes.
 */
export type ChoiceClass = AttackClass | "other" | null;

/** A local labeling decision, not yet acknowledged by the server. */
export interface Draft {
  label: LabelValue;
  attack_class: ChoiceClass;
}

/** One pending row as the server sends it. */
export interface WirePendingItem {
  query_id: string;
  text: string;
  f_value: number;
  origin: Origin;
  /** server-acknowledged label, null until a submission covered this row */
  label: LabelValue | null;
}

/** The console's view of a pending row: wire fields plus the draft. */
export interface PendingItem {
  query_id: string;
  text: string;
  f_value: number;
  origin: Origin;
  chosen_label: Draft | null;
}

export interface PendingPage {
  total: number;
  offset: number;
  items: WirePendingItem[];
}

export type SessionState = "awaiting_labels" | "ready_to_advance" | "finished";

/** Per-batch metrics row; batch is merged in by the server. */
export interface BatchMetrics {
  batch: number;
  f_value: number | null;
  fp_rate: number | null;
  [key: string]: unknown;
}

export interface SessionInfo {
  id: string;
  state: SessionState;
  current_batch: number | null;
  pending_count: number;
  metrics_history: BatchMetrics[];
}

/** One element of the POST /api/labels body. */
export interface LabelSubmission {
  query_id: string;
  label: LabelValue;
  attack_class: AttackClass | null;
}

export interface LabelsResponse {
  accepted: number;
  remaining: number;
  state: SessionState;
}

export interface BatchReport {
  batch: number;
  metrics: Record<string, number | null>;
  [key: string]: unknown;
}

export interface AdvanceResponse {
  report: BatchReport;
  session: SessionInfo;
}
