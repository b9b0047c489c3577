/** Single-page console: upload panel, overlay viewer, triage queue.
 *
 * Talks exclusively to the screening service's JSON API; the base URL comes
 * from ?service=... or defaults to same-origin.
 */

import { ServiceClient } from "./api.js";
import { OverlayViewer } from "./overlay.js";
import { TriageQueue } from "./triage.js";
import { UploadPanel } from "./upload.js";

export interface AppConfig {
  serviceBaseUrl: string;
  maxUploadBytes: number;
}

export function configFromLocation(location: Location): AppConfig {
  const params = new URLSearchParams(location.search);
  return {
    serviceBaseUrl: params.get("service") ?? "",
    maxUploadBytes: 25 * 1024 * 1024,
  };
}

export function mountApp(root: HTMLElement, config: AppConfig): void {
  const client = new ServiceClient(config.serviceBaseUrl);
  const upload = new UploadPanel(client, {
    maxUploadBytes: config.maxUploadBytes,
    onResult: (response) => {
      void openOverlay(response.case_id);
      void queue.reload().then(() => queue.render(queueHost));
    },
  });
  const queue = new TriageQueue(client);

  root.textContent = "";
  const header = document.createElement("header");
  header.innerHTML = `<h1>covidscreen console</h1>`;
  const statusEl = document.createElement("span");
  statusEl.className = "health";
  header.append(statusEl);

  const uploadSection = section("Upload study");
  const form = document.createElement("div");
  form.className = "upload-form";
  const fileInput = document.createElement("input");
  fileInput.type = "file";
  fileInput.accept = "image/*";
  const modalityPick = document.createElement("select");
  for (const m of ["ct", "cxr"]) {
    const option = document.createElement("option");
    option.value = m;
    option.textContent = m.toUpperCase();
    modalityPick.append(option);
  }
  const sendButton = document.createElement("button");
  sendButton.textContent = "Screen";
  form.append(fileInput, modalityPick, sendButton);
  const uploadHost = document.createElement("div");
  uploadSection.append(form, uploadHost);

  const overlaySection = section("Overlay");
  const overlayControls = document.createElement("div");
  overlayControls.className = "overlay-controls";
  const classPick = document.createElement("select");
  for (const name of ["covid19", "other_pneumonia", "normal"]) {
    const option = document.createElement("option");
    option.value = name;
    option.textContent = name;
    classPick.append(option);
  }
  const slider = document.createElement("input");
  slider.type = "range";
  slider.min = "0";
  slider.max = "1";
  slider.step = "0.05";
  slider.value = "0.4";
  overlayControls.append(classPick, slider);
  const overlayHost = document.createElement("div");
  overlaySection.append(overlayControls, overlayHost);
  overlaySection.hidden = true;

  const queueSection = section("Triage queue");
  const queueHost = document.createElement("div");
  queueSection.append(queueHost);

  root.append(header, uploadSection, overlaySection, queueSection);

  let viewer: OverlayViewer | null = null;

  async function openOverlay(caseId: string): Promise<void> {
    const summary = await client.getCase(caseId);
    viewer = new OverlayViewer(client, summary, classPick.value,
                               Number(slider.value));
    overlaySection.hidden = false;
    await viewer.refresh();
    viewer.render(overlayHost);
  }

  sendButton.addEventListener("click", () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    void upload
      .upload(file, modalityPick.value as "ct" | "cxr")
      .then(() => upload.render(uploadHost));
    upload.render(uploadHost);
  });

  slider.addEventListener("change", () => {
    if (!viewer) return;
    void viewer.setAlpha(Number(slider.value)).then(() =>
      viewer?.render(overlayHost));
  });

  classPick.addEventListener("change", () => {
    if (!viewer) return;
    void viewer.setClass(classPick.value).then(() =>
      viewer?.render(overlayHost));
  });

  upload.render(uploadHost);
  void queue.reload().then(() => queue.render(queueHost));
  void client
    .health()
    .then((health) => {
      statusEl.textContent =
        health.status === "ok" ? "service: ok" : "service: degraded";
      statusEl.className = `health health-${health.status}`;
    })
    .catch(() => {
      statusEl.textContent = "service: unreachable";
      statusEl.className = "health health-down";
    });
}

function section(title: string): HTMLElement {
  const el = document.createElement("section");
  const heading = document.createElement("h2");
  heading.textContent = title;
  el.append(heading);
  return el;
}
