/**
 * DOM builders for the labeling console.
 *
 * Query text is adversarial by construction: most of what lands in the
 * queue is an attack payload, frequently script or markup. Every place
 * that shows a query therefore assigns textContent and never parses
 * markup. Keep it that way.
 */

import type { Draft, PendingItem, SessionInfo } from "./types.js";
import { ATTACK_CLASSES } from "./types.js";

/** |f| below this renders an "uncertain" badge next to the score. */
export const UNCERTAIN_BAND = 0.25;

export type ChooseHandler = (queryId: string, draft: Draft) => void;

// ─── Queue ──────────────────────────────────────────────────────────

function choiceButton(
  text: string,
  pressed: boolean,
  onClick: () => void,
): HTMLButtonElement {
  const btn = document.createElement("button");
  btn.type = "button";
  btn.className = "choice" + (pressed ? " on" : "");
  btn.setAttribute("aria-pressed", pressed ? "true" : "false");
  btn.textContent = text;
  btn.addEventListener("click", onClick);
  return btn;
}

function badge(text: string, kind: string): HTMLSpanElement {
  const span = document.createElement("span");
  span.className = `badge badge-${kind}`;
  span.textContent = text;
  return span;
}

function renderRow(item: PendingItem, onChoose: ChooseHandler): HTMLElement {
  const row = document.createElement("article");
  row.className = "row";
  row.dataset.queryId = item.query_id;
  if (item.chosen_label) row.classList.add("labeled");

  const head = document.createElement("div");
  head.className = "row-head";
  head.appendChild(badge(item.origin, item.origin));
  const score = document.createElement("span");
  score.className = "f-value";
  score.textContent = `f = ${item.f_value.toFixed(3)}`;
  head.appendChild(score);
  if (Math.abs(item.f_value) < UNCERTAIN_BAND) {
    head.appendChild(badge("uncertain", "uncertain"));
  }
  row.appendChild(head);

  // the payload itself; textContent keeps any markup inert
  const text = document.createElement("pre");
  text.className = "query-text";
  text.textContent = item.text;
  row.appendChild(text);

  const chosen = item.chosen_label;
  const controls = document.createElement("div");
  controls.className = "choices";
  controls.appendChild(
    choiceButton("benign", chosen?.label === "benign", () =>
      onChoose(item.query_id, { label: "benign", attack_class: null }),
    ),
  );
  for (const cls of ATTACK_CLASSES) {
    controls.appendChild(
      choiceButton(cls, chosen?.label === "malicious" && chosen.attack_class === cls, () =>
        onChoose(item.query_id, { label: "malicious", attack_class: cls }),
      ),
    );
  }
  controls.appendChild(
    choiceButton(
      "other",
      chosen?.label === "malicious" &&
        (chosen.attack_class === "other" || chosen.attack_class === null),
      () => onChoose(item.query_id, { label: "malicious", attack_class: "other" }),
    ),
  );
  row.appendChild(controls);
  return row;
}

export function renderQueue(
  container: HTMLElement,
  items: PendingItem[],
  onChoose: ChooseHandler,
): void {
  container.replaceChildren();
  if (items.length === 0) {
    const cta = document.createElement("div");
    cta.className = "queue-empty";
    cta.textContent = "Nothing left to label. Ready to advance.";
    container.appendChild(cta);
    return;
  }
  for (const item of items) {
    container.appendChild(renderRow(item, onChoose));
  }
}

// ─── Controls ───────────────────────────────────────────────────────

export interface AdvanceView {
  state: SessionInfo["state"];
  /** unlabeled rows left across the whole batch, not just this page */
  remaining: number;
  busy: boolean;
}

/**
 * Gate the advance button. It only becomes clickable when the server
 * would accept the transition, so the console never fires a request the
 * state machine rejects.
 */
export function renderAdvance(button: HTMLButtonElement, view: AdvanceView): void {
  if (view.state === "finished") {
    button.disabled = true;
    button.textContent = "run complete";
    return;
  }
  if (view.busy) {
    button.disabled = true;
    button.textContent = "retraining...";
    return;
  }
  if (view.state === "ready_to_advance") {
    button.disabled = false;
    button.textContent = "advance";
    return;
  }
  button.disabled = view.remaining > 0;
  button.textContent =
    view.remaining > 0
      ? `label ${view.remaining} more to advance`
      : "submit labels and advance";
}

export function renderBanner(el: HTMLElement, message: string | null): void {
  if (message === null) {
    el.hidden = true;
    el.textContent = "";
    return;
  }
  el.hidden = false;
  el.textContent = message;
}

export function renderSessionLine(el: HTMLElement, session: SessionInfo): void {
  if (session.state === "finished") {
    el.textContent = `run finished after ${session.metrics_history.length} batches`;
    return;
  }
  el.textContent = `batch ${session.current_batch} / ${session.pending_count} awaiting labels`;
}
