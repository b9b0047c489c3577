/** Overlay viewer: class selector + opacity slider over the service's
 * rendered CAM endpoint.
 *
 * The blend itself happens server-side; alpha 0 therefore shows the raw
 * study bytes. Responses are cached per (case, class, alpha, model version)
 * and identical requests are deduplicated while in flight.
 */

import { ApiError, ServiceClient } from "./api.js";
import type { CaseSummary, CaseView } from "./types.js";

export type OverlayState =
  | { kind: "loading" }
  | { kind: "ready"; blob: Blob }
  | { kind: "stale-case" }          // 404: case vanished, prompt a refresh
  | { kind: "error"; message: string };

export class OverlayViewer {
  view: CaseView;
  state: OverlayState = { kind: "loading" };
  private cache = new Map<string, Blob>();
  private inflight = new Map<string, Promise<Blob>>();
  private generation = 0;

  constructor(
    private readonly client: ServiceClient,
    summary: CaseSummary,
    selectedClass = "covid19",
    alpha = 0.4,
  ) {
    this.view = { summary, selectedClass, alpha };
  }

  private key(className: string, alpha: number): string {
    return `${this.view.summary.case_id}|${className}|${alpha}|${this.view.summary.model_version}`;
  }

  /** Fetch (or reuse) the overlay for the current controls. */
  async refresh(): Promise<OverlayState> {
    const { selectedClass, alpha } = this.view;
    const key = this.key(selectedClass, alpha);
    const generation = ++this.generation;
    const cached = this.cache.get(key);
    if (cached) {
      this.state = { kind: "ready", blob: cached };
      return this.state;
    }
    this.state = { kind: "loading" };
    try {
      let pending = this.inflight.get(key);
      if (!pending) {
        pending = this.client.fetchOverlay(
          this.view.summary.case_id, selectedClass, alpha);
        this.inflight.set(key, pending);
      }
      const blob = await pending;
      this.inflight.delete(key);
      this.cache.set(key, blob);
      if (generation === this.generation) {
        this.state = { kind: "ready", blob };
      }
    } catch (error) {
      this.inflight.delete(key);
      if (generation !== this.generation) return this.state;
      if (error instanceof ApiError && error.status === 404) {
        this.state = { kind: "stale-case" };
      } else if (error instanceof ApiError) {
        this.state = { kind: "error", message: error.detail };
      } else {
        this.state = { kind: "error", message: String(error) };
      }
    }
    return this.state;
  }

  async setAlpha(alpha: number): Promise<OverlayState> {
    if (alpha < 0 || alpha > 1) throw new RangeError(`alpha ${alpha} outside [0, 1]`);
    this.view = { ...this.view, alpha };
    return this.refresh();
  }

  /** Switching class always re-requests the overlay for the new class. */
  async setClass(className: string): Promise<OverlayState> {
    this.view = { ...this.view, selectedClass: className };
    return this.refresh();
  }

  render(container: HTMLElement): void {
    container.textContent = "";
    const state = this.state;
    if (state.kind === "loading") {
      const note = document.createElement("p");
      note.textContent = "Rendering overlay…";
      note.className = "hint";
      container.append(note);
      return;
    }
    if (state.kind === "stale-case") {
      const prompt = document.createElement("div");
      prompt.className = "banner banner-warn stale-prompt";
      prompt.textContent = "This case no longer exists on the server; refresh the queue.";
      container.append(prompt);
      return;
    }
    if (state.kind === "error") {
      const el = document.createElement("div");
      el.className = "banner banner-error";
      el.textContent = state.message;
      container.append(el);
      return;
    }
    const img = document.createElement("img");
    img.className = "overlay-image";
    img.alt = `${this.view.selectedClass} overlay at alpha ${this.view.alpha}`;
    if (typeof URL.createObjectURL === "function") {
      img.src = URL.createObjectURL(state.blob);
    }
    container.append(img);
  }
}
