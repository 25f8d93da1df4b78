// DOM controller for the analyst console. Renders the queue and metrics
// from service payloads, drives keyboard labeling, and survives a flaky
// network: rejected labels stay visible with an inline error, and actions
// attempted while the service is unreachable are queued behind a retry
// banner instead of being dropped.

import { ServiceClient, ServiceRejection, ServiceUnreachable } from "./api.js";
import {
  accuracyPanel,
  formatAccuracy,
  formatScore,
  groupQueue,
  highlightedTokens,
  labelHotkeys,
  posteriorEntries,
} from "./model.js";
import type { IterationSummary, QueueItem } from "./types.js";

export interface SubmittedLabel {
  sampleId: string;
  label: string;
  remaining: number;
}

export class ConsoleApp {
  sessionId: string | null = null;
  items: QueueItem[] = [];
  submitted: SubmittedLabel[] = [];
  history: IterationSummary[] = [];
  selected: string | null = null;
  pendingRetry: (() => Promise<void>) | null = null;
  highlightThreshold: number;

  constructor(
    private client: ServiceClient,
    private root: HTMLElement,
    private doc: Document,
    private analystId: string = "console-analyst",
    highlightThreshold = 0.9,
  ) {
    this.highlightThreshold = highlightThreshold;
    this.doc.addEventListener("keydown", (event) => this.onKey(event as KeyboardEvent));
  }

  async start(sessionId?: string): Promise<void> {
    await this.guard(async () => {
      if (sessionId) {
        this.sessionId = sessionId;
      } else {
        const created = await this.client.createSession();
        this.sessionId = created.session_id;
      }
      await this.refresh();
    });
  }

  async refresh(): Promise<void> {
    if (!this.sessionId) return;
    const [queue, metrics] = await Promise.all([
      this.client.getQueue(this.sessionId),
      this.client.getMetrics(this.sessionId),
    ]);
    this.items = queue.items;
    this.history = metrics.history;
    if (this.selected && !this.items.some((i) => i.sample_id === this.selected)) {
      this.selected = this.items.length ? this.items[0].sample_id : null;
    }
    if (!this.selected && this.items.length) {
      this.selected = this.items[0].sample_id;
    }
    this.render();
  }

  // -- actions -------------------------------------------------------------

  async submitLabel(sampleId: string, label: string): Promise<void> {
    if (!this.sessionId) return;
    try {
      const ack = await this.client.submitLabel(this.sessionId, sampleId, label, this.analystId);
      this.submitted.push({ sampleId, label, remaining: ack.ack.remaining });
      this.items = this.items.filter((i) => i.sample_id !== sampleId);
      if (this.selected === sampleId) {
        this.selected = this.items.length ? this.items[0].sample_id : null;
      }
      this.render();
    } catch (err) {
      if (err instanceof ServiceRejection) {
        // the item stays; the analyst sees why the service said no
        this.showItemError(sampleId, err.message);
      } else if (err instanceof ServiceUnreachable) {
        this.queueRetry(() => this.submitLabel(sampleId, label));
      } else {
        throw err;
      }
    }
  }

  async advanceIteration(): Promise<void> {
    if (!this.sessionId) return;
    try {
      const result = await this.client.iterate(this.sessionId);
      this.history.push(result.summary);
      const queue = await this.client.getQueue(this.sessionId);
      this.items = queue.items;
      this.selected = this.items.length ? this.items[0].sample_id : null;
      this.render();
    } catch (err) {
      if (err instanceof ServiceRejection) {
        this.showBanner(`iteration rejected: ${err.message}`, false);
      } else if (err instanceof ServiceUnreachable) {
        this.queueRetry(() => this.advanceIteration());
      } else {
        throw err;
      }
    }
  }

  async retryPending(): Promise<void> {
    const action = this.pendingRetry;
    this.pendingRetry = null;
    this.hideBanner();
    if (action) {
      await action();
    }
  }

  private async guard(action: () => Promise<void>): Promise<void> {
    try {
      await action();
    } catch (err) {
      if (err instanceof ServiceUnreachable) {
        this.queueRetry(() => this.guard(action));
      } else {
        throw err;
      }
    }
  }

  private queueRetry(action: () => Promise<void>): void {
    // non-destructive: state is kept, the action waits for a retry
    this.pendingRetry = action;
    this.showBanner("service unreachable - action queued, nothing was lost", true);
  }

  private onKey(event: KeyboardEvent): void {
    if (!this.selected) return;
    const hotkeys = labelHotkeys();
    const label = hotkeys.get(event.key);
    if (label) {
      void this.submitLabel(this.selected, label);
    }
  }

  // -- rendering -----------------------------------------------------------

  render(): void {
    this.root.innerHTML = "";
    this.root.appendChild(this.renderBannerSlot());
    this.root.appendChild(this.renderQueue());
    this.root.appendChild(this.renderMetrics());
    this.root.appendChild(this.renderJournal());
  }

  private el(tag: string, className?: string, text?: string): HTMLElement {
    const node = this.doc.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
  }

  private renderBannerSlot(): HTMLElement {
    const slot = this.el("div", "banner-slot");
    slot.id = "banner-slot";
    return slot;
  }

  private showBanner(message: string, retryable: boolean): void {
    const slot = this.root.querySelector("#banner-slot");
    if (!slot) return;
    slot.innerHTML = "";
    const banner = this.el("div", "banner", message);
    if (retryable) {
      const button = this.el("button", "retry", "retry");
      button.addEventListener("click", () => void this.retryPending());
      banner.appendChild(button);
    }
    slot.appendChild(banner);
  }

  private hideBanner(): void {
    const slot = this.root.querySelector("#banner-slot");
    if (slot) slot.innerHTML = "";
  }

  private showItemError(sampleId: string, message: string): void {
    const card = this.root.querySelector(`[data-sample-id="${sampleId}"]`);
    if (!card) return;
    const existing = card.querySelector(".item-error");
    if (existing) existing.remove();
    card.appendChild(this.el("div", "item-error", message));
  }

  private renderQueue(): HTMLElement {
    const section = this.el("section", "queue");
    if (!this.items.length) {
      const prompt = this.el("div", "advance-prompt");
      prompt.appendChild(this.el("p", undefined, "queue is empty - advance the iteration to retrain and refill"));
      const button = this.el("button", "advance", "advance iteration");
      button.addEventListener("click", () => void this.advanceIteration());
      prompt.appendChild(button);
      section.appendChild(prompt);
      return section;
    }

    const grouped = groupQueue(this.items);
    const keyLegend = [...labelHotkeys().entries()]
      .map(([key, cls]) => `${key}=${cls}`)
      .join("  ");
    section.appendChild(this.el("p", "hotkeys", `label keys: ${keyLegend}`));

    for (const reason of ["uncertain", "anomalous"] as const) {
      const groupNode = this.el("div", `reason-group reason-${reason}`);
      const count = grouped[reason].reduce((n, g) => n + g.items.length, 0);
      groupNode.appendChild(this.el("h2", undefined, `${reason} (${count})`));
      for (const classGroup of grouped[reason]) {
        const classNode = this.el("div", "class-group");
        classNode.appendChild(
          this.el("h3", undefined, `${classGroup.className} (${classGroup.items.length})`),
        );
        for (const item of classGroup.items) {
          classNode.appendChild(this.renderItem(item));
        }
        groupNode.appendChild(classNode);
      }
      section.appendChild(groupNode);
    }

    const advance = this.el("button", "advance", "advance iteration");
    advance.addEventListener("click", () => void this.advanceIteration());
    section.appendChild(advance);
    return section;
  }

  private renderItem(item: QueueItem): HTMLElement {
    const card = this.el("article", "item");
    card.setAttribute("data-sample-id", item.sample_id);
    if (item.sample_id === this.selected) card.classList.add("selected");
    card.addEventListener("click", () => {
      this.selected = item.sample_id;
      this.render();
    });

    const badges = this.el("div", "badges");
    badges.appendChild(this.el("span", `badge badge-${item.reason}`, item.reason));
    badges.appendChild(this.el("span", "badge badge-class", item.predicted_class));
    badges.appendChild(
      this.el("span", "badge badge-score", `U ${formatScore(item.uncertainty)}`),
    );
    badges.appendChild(this.el("span", "badge badge-score", `A ${formatScore(item.anomaly)}`));
    card.appendChild(badges);

    card.appendChild(this.el("div", "parent-cmd", item.parent_cmdline));
    card.appendChild(this.renderCommand(item));
    card.appendChild(this.renderPosterior(item.posterior));
    return card;
  }

  // display-level split along the same delimiter characters the service
  // tokenizes on, so highlighted spans line up with its token scores
  private static SPLIT = /([ ,./\-:;\\="'()[\]{}&|<>@?!%+])/;

  private renderCommand(item: QueueItem): HTMLElement {
    const hot = highlightedTokens(item.token_scores, this.highlightThreshold);
    const node = this.el("div", "child-cmd");
    for (const part of item.child_cmdline.split(ConsoleApp.SPLIT)) {
      if (!part) continue;
      const tokenNode = this.el("span", undefined, part);
      if (hot.has(part.toLowerCase())) {
        tokenNode.className = "hot-token";
      }
      node.appendChild(tokenNode);
    }
    return node;
  }

  private renderPosterior(posterior: Record<string, number>): HTMLElement {
    const bar = this.el("div", "posterior");
    for (const [cls, prob] of posteriorEntries(posterior)) {
      const segment = this.el("span", "posterior-segment", `${cls} ${formatScore(prob)}`);
      segment.setAttribute("data-prob", String(prob));
      bar.appendChild(segment);
    }
    return bar;
  }

  private renderMetrics(): HTMLElement {
    const section = this.el("section", "metrics");
    section.appendChild(this.el("h2", undefined, "selection accuracy by reason"));
    const table = this.el("table", "accuracy-panel");
    const head = this.el("tr");
    for (const title of ["iteration", "uncertain", "anomalous", "overall"]) {
      head.appendChild(this.el("th", undefined, title));
    }
    table.appendChild(head);
    for (const row of accuracyPanel(this.history)) {
      const tr = this.el("tr", "accuracy-row");
      tr.appendChild(this.el("td", undefined, String(row.iteration)));
      tr.appendChild(this.el("td", undefined, formatAccuracy(row.uncertain)));
      tr.appendChild(this.el("td", undefined, formatAccuracy(row.anomalous)));
      tr.appendChild(this.el("td", undefined, formatAccuracy(row.overall)));
      table.appendChild(tr);
    }
    section.appendChild(table);
    return section;
  }

  private renderJournal(): HTMLElement {
    const section = this.el("section", "journal");
    section.appendChild(this.el("h2", undefined, `submitted labels (${this.submitted.length})`));
    const list = this.el("ul", "journal-list");
    for (const entry of this.submitted) {
      list.appendChild(
        this.el("li", "journal-entry", `${entry.sampleId} -> ${entry.label}`),
      );
    }
    section.appendChild(list);
    return section;
  }
}
