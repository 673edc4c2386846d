/**
 * Local draft store.
 *
 * Drafts live in localStorage keyed by session id, so a page refresh
 * (or a transient connection loss) never costs the operator their
 * choices. Once the server acknowledges a submission the drafts for
 * that batch are cleared; a new session id starts from a clean slate.
 */

import type {
  Draft,
  LabelSubmission,
  PendingItem,
  WirePendingItem,
} from "./types.js";

const KEY_PREFIX = "queryguard-drafts:";

function storageKey(sessionId: string): string {
  return KEY_PREFIX + sessionId;
}

export class DraftStore {
  private drafts = new Map<string, Draft>();

  constructor(
    readonly sessionId: string,
    private readonly storage: Storage = localStorage,
  ) {
    this.restore();
  }

  private restore(): void {
    const raw = this.storage.getItem(storageKey(this.sessionId));
    if (!raw) return;
    try {
      const parsed = JSON.parse(raw) as Record<string, Draft>;
      for (const [qid, draft] of Object.entries(parsed)) {
        if (draft && (draft.label === "benign" || draft.label === "malicious")) {
          this.drafts.set(qid, draft);
        }
      }
    } catch {
      // corrupted entry; start fresh rather than wedge the console
      this.storage.removeItem(storageKey(this.sessionId));
    }
  }

  private persist(): void {
    this.storage.setItem(
      storageKey(this.sessionId),
      JSON.stringify(Object.fromEntries(this.drafts)),
    );
  }

  get(queryId: string): Draft | null {
    return this.drafts.get(queryId) ?? null;
  }

  choose(queryId: string, draft: Draft): void {
    // benign never carries a class; the server rejects that combination
    const clean: Draft =
      draft.label === "benign" ? { label: "benign", attack_class: null } : draft;
    this.drafts.set(queryId, clean);
    this.persist();
  }

  clear(): void {
    this.drafts.clear();
    this.storage.removeItem(storageKey(this.sessionId));
  }

  /** Merge wire rows with local drafts into the view model. */
  mirror(items: WirePendingItem[]): PendingItem[] {
    return items.map((item) => ({
      query_id: item.query_id,
      text: item.text,
      f_value: item.f_value,
      origin: item.origin,
      chosen_label:
        this.get(item.query_id) ??
        (item.label ? { label: item.label, attack_class: null } : null),
    }));
  }
}

/** True when every row has either a server label or a local draft. */
export function allLabeled(items: PendingItem[]): boolean {
  return items.every((item) => item.chosen_label !== null);
}

/**
 * Build the POST /api/labels body for rows the server has not
 * acknowledged yet. "other" collapses to a bare malicious label.
 */
export function submissions(
  store: DraftStore,
  items: WirePendingItem[],
): LabelSubmission[] {
  const out: LabelSubmission[] = [];
  for (const item of items) {
    if (item.label !== null) continue; // already acknowledged
    const draft = store.get(item.query_id);
    if (!draft) continue;
    out.push({
      query_id: item.query_id,
      label: draft.label,
      attack_class:
        draft.label === "malicious" && draft.attack_class !== "other"
          ? draft.attack_class
          : null,
    });
  }
  return out;
}
