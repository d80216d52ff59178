/** Annotator single-page app. Framework-free: every string reaches the
 * document through textContent, so markup in corpus text or questions is
 * rendered inert. The service is the single source of truth for statuses,
 * consensus and kappa; this file only displays what it returns. */

import { AuthError, ReviewClient, ServiceUnreachableError, ValidationError } from "./client.js";
import { highlightSegments } from "./highlight.js";
import { PendingVerdictQueue, type StorageLike } from "./offline.js";
import { DIMENSION_FLAGS, type Decision, type DimensionFlag, type ReviewCard } from "./types.js";

export interface AppConfig {
  baseUrl: string;
  storage: StorageLike;
  fetchImpl?: typeof fetch;
}

type View = "login" | "queue" | "error";

export class ReviewApp {
  private client: ReviewClient | null = null;
  private annotatorId = "";
  private cards: ReviewCard[] = [];
  private queue: PendingVerdictQueue;
  private view: View = "login";
  private banner = "";

  constructor(
    private readonly root: HTMLElement,
    private readonly config: AppConfig,
  ) {
    this.queue = new PendingVerdictQueue(config.storage);
  }

  // ------------------------------------------------------------------
  // actions

  async login(annotatorId: string, token: string): Promise<void> {
    this.client = new ReviewClient({
      baseUrl: this.config.baseUrl,
      token,
      fetchImpl: this.config.fetchImpl,
    });
    this.annotatorId = annotatorId;
    await this.refresh();
  }

  async refresh(): Promise<void> {
    if (!this.client) return;
    try {
      this.cards = await this.client.loadQueue(this.annotatorId);
      this.view = "queue";
      this.banner = "";
    } catch (error) {
      if (error instanceof AuthError) {
        this.view = "login";
        this.banner = "sign-in failed: " + error.message;
      } else if (error instanceof ServiceUnreachableError) {
        this.view = "error";
        this.banner = "service unreachable; showing retry";
      } else {
        throw error;
      }
    }
    await this.render();
  }

  /** Submit from the card form. Mirrors the service rule client-side:
   * discard needs at least one flag. Returns an inline message on
   * rejection; on a race (item finalized meanwhile) refreshes the queue. */
  async submit(
    itemId: string,
    decision: Decision,
    flags: DimensionFlag[],
  ): Promise<{ ok: boolean; message?: string }> {
    if (!this.client) return { ok: false, message: "not signed in" };
    if (decision === "discard" && flags.length === 0) {
      return { ok: false, message: "select at least one dimension flag to discard" };
    }
    const verdict = {
      item_id: itemId,
      annotator_id: this.annotatorId,
      decision,
      dimension_flags: flags,
    };
    try {
      await this.client.submitVerdict(verdict);
    } catch (error) {
      if (error instanceof ServiceUnreachableError) {
        this.queue.enqueue(verdict);
        this.markLocalVerdict(itemId, decision, flags, false);
        await this.render();
        return { ok: true, message: "offline: verdict stored locally, unsynced" };
      }
      if (error instanceof ValidationError) {
        await this.refresh();
        return { ok: false, message: error.message };
      }
      throw error;
    }
    this.cards = this.cards.filter((card) => card.item.item_id !== itemId);
    await this.render();
    return { ok: true };
  }

  private markLocalVerdict(
    itemId: string,
    decision: Decision,
    flags: DimensionFlag[],
    synced: boolean,
  ): void {
    const card = this.cards.find((c) => c.item.item_id === itemId);
    if (card) card.myVerdict = { decision, dimension_flags: flags, synced };
  }

  pendingUnsynced(): number {
    return this.queue.pending().length;
  }

  async flushPending(): Promise<void> {
    if (this.client) {
      await this.queue.flush(this.client);
      await this.refresh();
    }
  }

  // ------------------------------------------------------------------
  // rendering

  async render(): Promise<void> {
    this.root.replaceChildren();
    if (this.banner) {
      const banner = el("div", this.banner);
      banner.className = this.view === "error" ? "banner banner-retry" : "banner";
      if (this.view === "error") {
        const retry = el("button", "Retry");
        retry.onclick = () => void this.refresh();
        banner.appendChild(retry);
      }
      this.root.appendChild(banner);
    }
    if (this.view === "login") {
      this.root.appendChild(this.renderLogin());
      return;
    }
    this.root.appendChild(await this.renderDashboard());
    if (this.view === "queue") {
      this.root.appendChild(this.renderQueue());
    }
  }

  private renderLogin(): HTMLElement {
    const form = document.createElement("form");
    form.className = "login";
    form.appendChild(el("h2", "Annotator sign-in"));
    const annotator = input("annotator id");
    const token = input("access token", "password");
    const button = el("button", "Sign in");
    button.setAttribute("type", "submit");
    form.append(annotator, token, button);
    form.onsubmit = (event) => {
      event.preventDefault();
      void this.login(annotator.value.trim(), token.value.trim());
    };
    return form;
  }

  private async renderDashboard(): Promise<HTMLElement> {
    const panel = document.createElement("section");
    panel.className = "dashboard";
    panel.appendChild(el("h2", "Agreement"));
    if (!this.client) return panel;
    try {
      const report = await this.client.agreement();
      if (report.n_items === 0) {
        panel.appendChild(el("p", "No completed items yet.", "placeholder"));
        return panel;
      }
      const kappa =
        report.kappa === null ? "pending (needs 2+ completed items)" : report.kappa.toFixed(2);
      panel.appendChild(el("p", `Fleiss kappa: ${kappa}`, "kappa"));
      if (report.degenerate) {
        panel.appendChild(
          el("span", "single-category agreement: kappa defined as 1.0", "badge badge-warning"),
        );
      }
      for (const [category, share] of Object.entries(report.per_category_marginals)) {
        panel.appendChild(el("p", `${category}: ${(share * 100).toFixed(1)}%`, "marginal"));
      }
      panel.appendChild(
        el("p", `awaiting adjudication: ${report.adjudication_pending}`, "adjudication"),
      );
    } catch {
      panel.appendChild(el("p", "agreement unavailable", "placeholder"));
    }
    return panel;
  }

  private renderQueue(): HTMLElement {
    const section = document.createElement("section");
    section.className = "queue";
    section.appendChild(el("h2", `Queue for ${this.annotatorId}`));
    if (this.pendingUnsynced() > 0) {
      const note = el("div", `${this.pendingUnsynced()} unsynced verdict(s)`, "unsynced");
      const sync = el("button", "Sync now");
      sync.onclick = () => void this.flushPending();
      note.appendChild(sync);
      section.appendChild(note);
    }
    if (this.cards.length === 0) {
      section.appendChild(el("p", "Nothing pending. Well reviewed!", "empty-state"));
      return section;
    }
    for (const card of this.cards) {
      section.appendChild(this.renderCard(card));
    }
    return section;
  }

  private renderCard(card: ReviewCard): HTMLElement {
    const article = document.createElement("article");
    article.className = "card";
    article.dataset.itemId = card.item.item_id;

    article.appendChild(
      el("h3", `${card.item.topology} / ${card.item.hops}-hop — ${card.item.item_id}`),
    );
    article.appendChild(el("p", card.item.question, "final-question"));
    article.appendChild(el("p", `Answer: ${card.item.answer}`, "final-answer"));

    // the reasoning chain, layer by layer; every hop visible by default
    const ladder = document.createElement("ol");
    ladder.className = "ladder";
    for (const row of card.item.ladder) {
      const li = document.createElement("li");
      li.className = "hop";
      li.appendChild(el("p", `Q${row.hop}: ${row.sub_question}`, "sub-question"));
      li.appendChild(el("p", `A${row.hop}: ${row.sub_answer}`, "sub-answer"));
      if (row.evidence_text) {
        const evidence = document.createElement("blockquote");
        evidence.className = "evidence";
        if (row.doc_title) evidence.appendChild(el("cite", row.doc_title));
        const passage = document.createElement("p");
        for (const segment of highlightSegments(row.evidence_text, row.sub_answer)) {
          const span = document.createElement("span");
          span.textContent = segment.text;
          if (segment.highlighted) span.className = "highlight";
          passage.appendChild(span);
        }
        evidence.appendChild(passage);
        li.appendChild(evidence);
      }
      ladder.appendChild(li);
    }
    article.appendChild(ladder);

    article.appendChild(this.renderVerdictForm(card));
    if (card.myVerdict && !card.myVerdict.synced) {
      article.appendChild(el("span", "unsynced", "badge badge-unsynced"));
    }
    return article;
  }

  private renderVerdictForm(card: ReviewCard): HTMLElement {
    const form = document.createElement("form");
    form.className = "verdict-form";
    const flagBoxes: HTMLInputElement[] = [];
    for (const flag of DIMENSION_FLAGS) {
      const label = document.createElement("label");
      const box = document.createElement("input");
      box.type = "checkbox";
      box.value = flag;
      flagBoxes.push(box);
      label.append(box, document.createTextNode(flag));
      form.appendChild(label);
    }
    const message = el("p", "", "inline-message");
    const submit = async (decision: Decision) => {
      const flags = flagBoxes.filter((b) => b.checked).map((b) => b.value as DimensionFlag);
      const result = await this.submit(card.item.item_id, decision, flags);
      message.textContent = result.message ?? "";
    };
    const retain = el("button", "Retain");
    retain.setAttribute("type", "button");
    retain.onclick = () => void submit("retain");
    const discard = el("button", "Discard");
    discard.setAttribute("type", "button");
    discard.onclick = () => void submit("discard");
    form.append(retain, discard, message);
    return form;
  }
}

function el(tag: string, text: string, className?: string): HTMLElement {
  const node = document.createElement(tag);
  node.textContent = text;
  if (className) node.className = className;
  return node;
}

function input(placeholder: string, type = "text"): HTMLInputElement {
  const node = document.createElement("input");
  node.type = type;
  node.placeholder = placeholder;
  return node;
}

export function mount(root: HTMLElement, config: AppConfig): ReviewApp {
  const app = new ReviewApp(root, config);
  void app.render();
  return app;
}
