/** Triage queue: newest-first case list with decision actions.
 *
 * Decisions apply optimistically and roll back to the server's state when
 * the write fails; a conflicting write surfaces the refreshed case instead
 * of clobbering it.
 */

import { ApiError, ServiceClient } from "./api.js";
import type { CaseSummary, TriageDecision } from "./types.js";

export class TriageQueue {
  cases: CaseSummary[] = [];
  filter: TriageDecision | undefined;
  error: string | null = null;

  constructor(private readonly client: ServiceClient) {}

  async reload(filter?: TriageDecision): Promise<CaseSummary[]> {
    this.filter = filter;
    const listing = await this.client.listCases(filter);
    this.cases = listing.cases;
    this.error = null;
    return this.cases;
  }

  private replace(updated: CaseSummary): void {
    const index = this.cases.findIndex((c) => c.case_id === updated.case_id);
    if (index >= 0) this.cases[index] = updated;
  }

  /** Apply a decision optimistically; returns the case as the server left it. */
  async decide(
    caseId: string,
    decision: TriageDecision,
    note = "",
  ): Promise<CaseSummary | null> {
    const index = this.cases.findIndex((c) => c.case_id === caseId);
    const previous = index >= 0 ? this.cases[index] : null;
    if (previous) {
      this.cases[index] = { ...previous, triage: decision, note };
    }
    try {
      const confirmed = await this.client.setTriage(caseId, decision, note);
      this.replace(confirmed);
      this.error = null;
      return confirmed;
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        // case is gone: drop the optimistic row and say so
        this.cases = this.cases.filter((c) => c.case_id !== caseId);
        this.error = "case no longer exists; refresh the queue";
        return null;
      }
      // roll the optimistic edit back to the server's current state
      try {
        const current = await this.client.getCase(caseId);
        this.replace(current);
        this.error = `decision not saved: ${String(error)}`;
        return current;
      } catch {
        if (previous && index >= 0) this.cases[index] = previous;
        this.error = `decision not saved: ${String(error)}`;
        return previous;
      }
    }
  }

  render(container: HTMLElement,
         onDecision?: (caseId: string, decision: TriageDecision) => void): void {
    container.textContent = "";
    if (this.error) {
      const note = document.createElement("div");
      note.className = "banner banner-warn";
      note.textContent = this.error;
      container.append(note);
    }
    if (this.cases.length === 0) {
      const empty = document.createElement("p");
      empty.className = "empty-state";
      empty.textContent = this.filter
        ? `No cases with triage ${this.filter}.`
        : "No cases yet. Upload a study to begin.";
      container.append(empty);
      return;
    }
    const list = document.createElement("ul");
    list.className = "case-list";
    for (const summary of this.cases) {
      const item = document.createElement("li");
      item.className = "case-row";
      item.dataset.caseId = summary.case_id;
      item.dataset.triage = summary.triage;
      const text = document.createElement("span");
      text.textContent =
        `${summary.case_id.slice(0, 8)} · ${summary.modality} · ` +
        `${summary.predicted_label} · ${summary.triage}`;
      item.append(text);
      for (const decision of ["CONFIRM_POSITIVE", "CONFIRM_NEGATIVE",
                              "NEEDS_REVIEW"] as TriageDecision[]) {
        const button = document.createElement("button");
        button.textContent = decision.replace("_", " ").toLowerCase();
        button.className = "triage-action";
        button.dataset.decision = decision;
        button.addEventListener("click", () => {
          onDecision?.(summary.case_id, decision);
          void this.decide(summary.case_id, decision).then(() =>
            this.render(container, onDecision));
        });
        item.append(button);
      }
      list.append(item);
    }
    container.append(list);
  }
}
