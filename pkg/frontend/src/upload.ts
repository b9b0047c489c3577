/** Upload flow: push a study to the service, render the returned result.
 *
 * Every number shown comes straight from the service response; the panel
 * never computes or adjusts probabilities locally.
 */

import { ApiError, NetworkError, ServiceClient } from "./api.js";
import type { Modality, PredictResponse } from "./types.js";

export type UploadState =
  | { kind: "idle" }
  | { kind: "uploading"; filename: string }
  | { kind: "result"; response: PredictResponse }
  | { kind: "rejected"; message: string }          // client-side, never sent
  | { kind: "service-error"; status: number; message: string }
  | { kind: "model-unavailable"; message: string } // 503 banner
  | { kind: "network-error"; message: string };    // retry banner

export interface UploadOptions {
  maxUploadBytes: number;
  onResult?: (response: PredictResponse) => void;
}

export class UploadPanel {
  state: UploadState = { kind: "idle" };
  private lastFile: File | null = null;
  private lastModality: Modality = "ct";

  constructor(
    private readonly client: ServiceClient,
    private readonly options: UploadOptions,
  ) {}

  /** Upload one study; oversized files are rejected before any request. */
  async upload(file: File, modality: Modality): Promise<UploadState> {
    if (file.size > this.options.maxUploadBytes) {
      this.state = {
        kind: "rejected",
        message:
          `${file.name} is ${file.size} bytes; ` +
          `limit is ${this.options.maxUploadBytes}`,
      };
      return this.state;
    }
    this.lastFile = file;
    this.lastModality = modality;
    this.state = { kind: "uploading", filename: file.name };
    try {
      const response = await this.client.predict(file, modality);
      this.state = { kind: "result", response };
      this.options.onResult?.(response);
    } catch (error) {
      if (error instanceof ApiError && error.status === 503) {
        this.state = { kind: "model-unavailable", message: error.detail };
      } else if (error instanceof ApiError) {
        this.state = {
          kind: "service-error",
          status: error.status,
          message: error.detail,
        };
      } else if (error instanceof NetworkError) {
        this.state = { kind: "network-error", message: error.message };
      } else {
        throw error;
      }
    }
    return this.state;
  }

  /** Re-send the last attempt (the retry banner's action). */
  async retry(): Promise<UploadState> {
    if (!this.lastFile) return this.state;
    return this.upload(this.lastFile, this.lastModality);
  }

  render(container: HTMLElement): void {
    container.textContent = "";
    const state = this.state;
    switch (state.kind) {
      case "idle":
        container.append(paragraph("Select a study to screen.", "hint"));
        break;
      case "uploading":
        container.append(paragraph(`Uploading ${state.filename}…`, "hint"));
        break;
      case "rejected":
        container.append(banner(state.message, "banner-warn"));
        break;
      case "model-unavailable":
        container.append(banner(`Model not loaded: ${state.message}`, "banner-error"));
        break;
      case "service-error":
        container.append(
          banner(`Service rejected the upload (${state.status}): ${state.message}`,
                 "banner-error"),
        );
        break;
      case "network-error": {
        const el = banner("Service unreachable.", "banner-error retry-banner");
        const button = document.createElement("button");
        button.textContent = "Retry";
        button.className = "retry-button";
        button.addEventListener("click", () => {
          void this.retry().then(() => this.render(container));
        });
        el.append(button);
        container.append(el);
        break;
      }
      case "result":
        container.append(this.renderResult(state.response));
        break;
    }
  }

  private renderResult(response: PredictResponse): HTMLElement {
    const panel = document.createElement("div");
    panel.className = "result-panel";
    panel.append(
      paragraph(`Predicted: ${response.predicted_label}`, "predicted-label"),
      paragraph(`Model ${response.model_version} · case ${response.case_id}`,
                "result-meta"),
    );
    const bars = document.createElement("div");
    bars.className = "probability-bars";
    for (const [name, value] of Object.entries(response.probabilities)) {
      const row = document.createElement("div");
      row.className = "probability-row";
      row.dataset.class = name;
      row.dataset.value = String(value);
      const label = document.createElement("span");
      label.textContent = `${name}: ${(value * 100).toFixed(1)}%`;
      const bar = document.createElement("div");
      bar.className = "bar";
      bar.style.width = `${Math.round(value * 100)}%`;
      row.append(label, bar);
      bars.append(row);
    }
    panel.append(bars);
    return panel;
  }
}

function paragraph(text: string, className: string): HTMLElement {
  const el = document.createElement("p");
  el.textContent = text;
  el.className = className;
  return el;
}

function banner(text: string, className: string): HTMLElement {
  const el = document.createElement("div");
  el.textContent = text;
  el.className = `banner ${className}`;
  return el;
}
