/**
 * Console wiring: load the session, fetch the full pending set, render
 * the queue, and drive the submit-then-advance transition.
 *
 * The client tracks the server's state machine and only fires requests
 * the server will accept: labels are posted once per batch when every
 * row has a draft, and advance is posted only from ready_to_advance.
 */

import * as api from "./api.js";
import { renderTrend } from "./chart.js";
import {
  renderAdvance,
  renderBanner,
  renderQueue,
  renderSessionLine,
} from "./render.js";
import { allLabeled, DraftStore, submissions } from "./state.js";
import type { Draft, SessionInfo, WirePendingItem } from "./types.js";

const PAGE_SIZE = 25;

const KEY_DRAFTS: Record<string, Draft> = {
  b: { label: "benign", attack_class: null },
  "1": { label: "malicious", attack_class: "sqli" },
  "2": { label: "malicious", attack_class: "xss" },
  "3": { label: "malicious", attack_class: "dt" },
  "4": { label: "malicious", attack_class: "rfi" },
  "0": { label: "malicious", attack_class: "other" },
  o: { label: "malicious", attack_class: "other" },
};

class Console {
  private session: SessionInfo | null = null;
  private store: DraftStore | null = null;
  private rows: WirePendingItem[] = [];
  private page = 0;
  private cursor = 0;
  private busy = false;
  private banner: string | null = null;
  private retry: (() => void) | null = null;

  constructor(
    private readonly els: {
      sessionLine: HTMLElement;
      bannerBox: HTMLElement;
      bannerText: HTMLElement;
      bannerRetry: HTMLButtonElement;
      trend: SVGElement;
      queue: HTMLElement;
      pager: HTMLElement;
      pageLabel: HTMLElement;
      prev: HTMLButtonElement;
      next: HTMLButtonElement;
      advance: HTMLButtonElement;
      progress: HTMLElement;
    },
  ) {
    els.advance.addEventListener("click", () => void this.submitAndAdvance());
    els.prev.addEventListener("click", () => this.turn(-1));
    els.next.addEventListener("click", () => this.turn(1));
    els.bannerRetry.addEventListener("click", () => {
      const again = this.retry ?? (() => void this.refresh());
      again();
    });
    document.addEventListener("keydown", (e) => this.onKey(e));
  }

  async refresh(): Promise<void> {
    try {
      const session = await api.getSession();
      if (!this.store || this.store.sessionId !== session.id) {
        this.store = new DraftStore(session.id);
      }
      this.session = session;
      this.rows = session.state === "finished" ? [] : await this.fetchAllPending();
      this.banner = null;
      this.retry = null;
    } catch (err) {
      this.fail(err, () => void this.refresh());
    }
    this.clampCursor();
    this.render();
  }

  /** Pull every page; the pending set is one selection budget, so small. */
  private async fetchAllPending(): Promise<WirePendingItem[]> {
    const rows: WirePendingItem[] = [];
    let offset = 0;
    for (;;) {
      const page = await api.getPending(offset, PAGE_SIZE);
      rows.push(...page.items);
      offset += page.items.length;
      if (offset >= page.total || page.items.length === 0) return rows;
    }
  }

  private choose(queryId: string, draft: Draft): void {
    if (!this.store || this.busy) return;
    if (this.session?.state !== "awaiting_labels") return;
    this.store.choose(queryId, draft);
    this.advanceCursor();
    this.render();
  }

  /** Unlabeled rows with no draft yet, across the whole batch. */
  private remaining(): number {
    if (!this.store) return this.rows.length;
    const mirrored = this.store.mirror(this.rows);
    return mirrored.filter((m) => m.chosen_label === null).length;
  }

  private async submitAndAdvance(): Promise<void> {
    if (this.busy || !this.session || !this.store) return;
    if (this.session.state === "finished") return;
    if (this.session.state === "awaiting_labels" && this.remaining() > 0) return;
    this.busy = true;
    this.render();
    try {
      if (this.session.state === "awaiting_labels") {
        const body = submissions(this.store, this.rows);
        if (body.length > 0) {
          const ack = await api.postLabels(body);
          this.session = { ...this.session, state: ack.state };
        }
      }
      const res = await api.postAdvance();
      this.store.clear();
      this.session = res.session;
      this.rows =
        res.session.state === "finished" ? [] : await this.fetchAllPending();
      this.page = 0;
      this.cursor = 0;
      this.banner = null;
      this.retry = null;
    } catch (err) {
      this.fail(err, () => void this.submitAndAdvance());
    } finally {
      this.busy = false;
      this.render();
    }
  }

  /** Surface the failure verbatim; drafts stay in the store untouched. */
  private fail(err: unknown, retry: () => void): void {
    this.banner = err instanceof Error ? err.message : String(err);
    this.retry = retry;
  }

  // -- view -----------------------------------------------------------------

  private pageRows(): WirePendingItem[] {
    return this.rows.slice(this.page * PAGE_SIZE, (this.page + 1) * PAGE_SIZE);
  }

  private pageCount(): number {
    return Math.max(1, Math.ceil(this.rows.length / PAGE_SIZE));
  }

  private turn(delta: number): void {
    const next = this.page + delta;
    if (next < 0 || next >= this.pageCount()) return;
    this.page = next;
    this.cursor = 0;
    this.render();
  }

  private clampCursor(): void {
    const n = this.pageRows().length;
    this.cursor = Math.max(0, Math.min(this.cursor, n - 1));
  }

  private advanceCursor(): void {
    if (!this.store) return;
    const mirrored = this.store.mirror(this.pageRows());
    for (let i = 1; i <= mirrored.length; i++) {
      const probe = (this.cursor + i) % mirrored.length;
      if (mirrored[probe].chosen_label === null) {
        this.cursor = probe;
        return;
      }
    }
  }

  private onKey(e: KeyboardEvent): void {
    if (this.busy || !this.session || this.session.state === "finished") return;
    if (e.key === "j" || e.key === "ArrowDown") {
      this.cursor += 1;
      this.clampCursor();
      this.render();
      return;
    }
    if (e.key === "k" || e.key === "ArrowUp") {
      this.cursor -= 1;
      this.clampCursor();
      this.render();
      return;
    }
    if (e.key === "n") return this.turn(1);
    if (e.key === "p") return this.turn(-1);
    const draft = KEY_DRAFTS[e.key];
    if (draft) {
      const row = this.pageRows()[this.cursor];
      if (row) this.choose(row.query_id, { ...draft });
    }
  }

  private render(): void {
    const { els } = this;
    renderBanner(els.bannerText, this.banner);
    els.bannerBox.hidden = this.banner === null;
    if (!this.session || !this.store) return;

    renderSessionLine(els.sessionLine, this.session);
    renderTrend(els.trend, this.session.metrics_history);

    const mirrored = this.store.mirror(this.pageRows());
    if (this.session.state === "finished") {
      els.queue.replaceChildren();
      const done = document.createElement("div");
      done.className = "queue-empty";
      done.textContent = "Run complete. The trend above covers every batch.";
      els.queue.appendChild(done);
    } else {
      renderQueue(els.queue, mirrored, (qid, draft) => this.choose(qid, draft));
      const rowEls = els.queue.querySelectorAll<HTMLElement>(".row");
      rowEls[this.cursor]?.classList.add("cursor");
    }

    const pages = this.pageCount();
    els.pager.hidden = pages <= 1;
    els.pageLabel.textContent = `page ${this.page + 1} of ${pages}`;
    els.prev.disabled = this.page === 0;
    els.next.disabled = this.page >= pages - 1;

    renderAdvance(els.advance, {
      state: this.session.state,
      remaining: this.remaining(),
      busy: this.busy,
    });
    els.progress.hidden = !this.busy;
  }
}

function grab<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

export function mount(): Console {
  const app = new Console({
    sessionLine: grab("session-line"),
    bannerBox: grab("banner"),
    bannerText: grab("banner-text"),
    bannerRetry: grab<HTMLButtonElement>("banner-retry"),
    trend: grab("trend") as unknown as SVGElement,
    queue: grab("queue"),
    pager: grab("pager"),
    pageLabel: grab("page-label"),
    prev: grab<HTMLButtonElement>("prev"),
    next: grab<HTMLButtonElement>("next"),
    advance: grab<HTMLButtonElement>("advance"),
    progress: grab("progress"),
  });
  void app.refresh();
  return app;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mount();
}
