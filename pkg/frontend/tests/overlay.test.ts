import { beforeEach, describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { OverlayViewer } from "../src/overlay.js";
import type { CaseSummary } from "../src/types.js";
import { MockService } from "./mock_service.js";

async function uploadedCase(service: MockService): Promise<CaseSummary> {
  const client = new ServiceClient("", service.fetch);
  const file = new File([new Uint8Array([1, 2, 3, 4, 5])], "s.png",
                        { type: "image/png" });
  const response = await client.predict(file, "ct");
  return await client.getCase(response.case_id);
}

describe("overlay viewer", () => {
  let service: MockService;
  let client: ServiceClient;
  let summary: CaseSummary;

  beforeEach(async () => {
    service = new MockService();
    client = new ServiceClient("", service.fetch);
    summary = await uploadedCase(service);
  });

  it("shows the raw study at alpha 0", async () => {
    const viewer = new OverlayViewer(client, summary, "covid19", 0);
    const state = await viewer.refresh();
    expect(state.kind).toBe("ready");
    if (state.kind !== "ready") return;
    const shown = new Uint8Array(await state.blob.arrayBuffer());
    expect([...shown]).toEqual([1, 2, 3, 4, 5]);
  });

  it("shows the pure rendered heatmap at alpha 1", async () => {
    const viewer = new OverlayViewer(client, summary, "covid19", 1);
    const state = await viewer.refresh();
    expect(state.kind).toBe("ready");
    if (state.kind !== "ready") return;
    const shown = new Uint8Array(await state.blob.arrayBuffer());
    expect([...shown]).toEqual(
      [...service.overlayBytes(summary.case_id, "covid19", 1)]);
  });

  it("caches identical renders instead of re-requesting", async () => {
    const viewer = new OverlayViewer(client, summary, "covid19", 0.4);
    await viewer.refresh();
    const requestsAfterFirst = service.requests.filter(
      (r) => r.url.includes("/cam")).length;
    await viewer.refresh();
    const requestsAfterSecond = service.requests.filter(
      (r) => r.url.includes("/cam")).length;
    expect(requestsAfterSecond).toBe(requestsAfterFirst);
  });

  it("re-fetches when the class changes", async () => {
    const viewer = new OverlayViewer(client, summary, "covid19", 0.4);
    await viewer.refresh();
    const before = service.requests.filter((r) => r.url.includes("/cam")).length;
    const state = await viewer.setClass("other_pneumonia");
    const after = service.requests.filter((r) => r.url.includes("/cam")).length;
    expect(after).toBe(before + 1);
    expect(state.kind).toBe("ready");
    if (state.kind !== "ready") return;
    const shown = new Uint8Array(await state.blob.arrayBuffer());
    expect([...shown]).toEqual(
      [...service.overlayBytes(summary.case_id, "other_pneumonia", 0.4)]);
  });

  it("re-fetches when the slider moves", async () => {
    const viewer = new OverlayViewer(client, summary, "covid19", 0.4);
    await viewer.refresh();
    const before = service.requests.filter((r) => r.url.includes("/cam")).length;
    await viewer.setAlpha(0.8);
    const after = service.requests.filter((r) => r.url.includes("/cam")).length;
    expect(after).toBe(before + 1);
  });

  it("prompts a refresh when the case vanished (404)", async () => {
    service.cases.delete(summary.case_id);
    const viewer = new OverlayViewer(client, summary, "covid19", 0.4);
    const state = await viewer.refresh();
    expect(state.kind).toBe("stale-case");

    const host = document.createElement("div");
    viewer.render(host);
    expect(host.querySelector(".stale-prompt")).not.toBeNull();
  });

  it("rejects out-of-range alpha locally", async () => {
    const viewer = new OverlayViewer(client, summary, "covid19", 0.4);
    await expect(viewer.setAlpha(1.5)).rejects.toThrow(RangeError);
  });
});
