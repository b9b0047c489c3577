import { beforeEach, describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { TriageQueue } from "../src/triage.js";
import { MockService } from "./mock_service.js";

async function seedCases(service: MockService, count: number): Promise<string[]> {
  const client = new ServiceClient("", service.fetch);
  const ids: string[] = [];
  for (let i = 0; i < count; i++) {
    const file = new File([new Uint8Array([i])], `s${i}.png`,
                          { type: "image/png" });
    const response = await client.predict(file, "ct");
    ids.push(response.case_id);
  }
  return ids;
}

describe("triage queue", () => {
  let service: MockService;
  let client: ServiceClient;

  beforeEach(() => {
    service = new MockService();
    client = new ServiceClient("", service.fetch);
  });

  it("marks NEEDS_REVIEW and finds it under the filter", async () => {
    const [first] = await seedCases(service, 3);
    const queue = new TriageQueue(client);
    await queue.reload();
    await queue.decide(first, "NEEDS_REVIEW");

    const filtered = await queue.reload("NEEDS_REVIEW");
    expect(filtered.map((c) => c.case_id)).toEqual([first]);
    expect(filtered[0].triage).toBe("NEEDS_REVIEW");
  });

  it("applies decisions optimistically and keeps the server's answer", async () => {
    const [id] = await seedCases(service, 1);
    const queue = new TriageQueue(client);
    await queue.reload();
    const promise = queue.decide(id, "CONFIRM_NEGATIVE", "clear lungs");
    // optimistic state is visible before the server answers
    expect(queue.cases[0].triage).toBe("CONFIRM_NEGATIVE");
    const confirmed = await promise;
    expect(confirmed?.triage).toBe("CONFIRM_NEGATIVE");
    expect(confirmed?.note).toBe("clear lungs");
  });

  it("rolls back the optimistic edit when the write fails", async () => {
    const [id] = await seedCases(service, 1);
    const queue = new TriageQueue(client);
    await queue.reload();
    service.failNext({
      match: (url, method) => url.includes("/triage") && method === "POST",
      status: 500,
      detail: "store unavailable",
    });
    const result = await queue.decide(id, "CONFIRM_POSITIVE");
    expect(result?.triage).toBe("UNREVIEWED");       // server state restored
    expect(queue.cases[0].triage).toBe("UNREVIEWED");
    expect(queue.error).toContain("decision not saved");
  });

  it("surfaces the refreshed state on a two-writer conflict", async () => {
    const [id] = await seedCases(service, 1);
    const queue = new TriageQueue(client);
    await queue.reload();
    // another tab decides first
    await client.setTriage(id, "CONFIRM_POSITIVE", "tab two");
    // this tab's write fails; the queue must show the other tab's decision
    service.failNext({
      match: (url, method) => url.includes("/triage") && method === "POST",
      status: 500,
      detail: "write conflict",
    });
    const result = await queue.decide(id, "CONFIRM_NEGATIVE");
    expect(result?.triage).toBe("CONFIRM_POSITIVE");
    expect(result?.note).toBe("tab two");
  });

  it("drops the row and explains when the case vanished", async () => {
    const [id] = await seedCases(service, 1);
    const queue = new TriageQueue(client);
    await queue.reload();
    service.cases.delete(id);
    const result = await queue.decide(id, "NEEDS_REVIEW");
    expect(result).toBeNull();
    expect(queue.cases).toHaveLength(0);
    expect(queue.error).toContain("no longer exists");
  });

  it("renders an explicit empty state", async () => {
    const queue = new TriageQueue(client);
    await queue.reload();
    const host = document.createElement("div");
    queue.render(host);
    expect(host.querySelector(".empty-state")?.textContent)
      .toContain("No cases yet");
  });

  it("lists newest first with decision buttons", async () => {
    const ids = await seedCases(service, 2);
    const queue = new TriageQueue(client);
    await queue.reload();
    const host = document.createElement("div");
    queue.render(host);
    const rows = [...host.querySelectorAll(".case-row")] as HTMLElement[];
    expect(rows).toHaveLength(2);
    expect(rows.map((r) => r.dataset.caseId))
      .toEqual([...ids].reverse());
    expect(rows[0].querySelectorAll(".triage-action")).toHaveLength(3);
  });
});
