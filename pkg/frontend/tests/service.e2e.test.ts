/** Round trip against the live review service, driven entirely through the
 * UI's client code: three simulated annotators move one item to unanimity
 * (open -> complete) and another to a 2-1 split (open -> adjudicating),
 * checking the dashboard after every submission; a discard without flags is
 * blocked. The service is the real thing, spawned as a subprocess over a
 * freshly synthesized benchmark. */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ReviewClient, ValidationError } from "../src/client.js";

const PYTHON = process.env.HOPFORGE_PYTHON ?? "python3";
const PORT = 18420 + Math.floor(Math.random() * 500);
const BASE = `http://127.0.0.1:${PORT}`;
const TOKENS: Record<string, string> = {
  "ann-a": "token-a",
  "ann-b": "token-b",
  "ann-c": "token-c",
};

let workspace: string;
let server: ChildProcess;

function clientFor(annotator: string): ReviewClient {
  return new ReviewClient({ baseUrl: BASE, token: TOKENS[annotator] });
}

async function serviceUp(): Promise<boolean> {
  try {
    const response = await fetch(`${BASE}/agreement`, {
      headers: { authorization: "Bearer token-a" },
    });
    return response.status < 500;
  } catch {
    return false;
  }
}

beforeAll(async () => {
  workspace = mkdtempSync(join(tmpdir(), "hopforge-ui-e2e-"));
  const prepared = spawnSync(
    PYTHON,
    ["-m", "hopforge.fixtures", workspace, "--through-verify"],
    { encoding: "utf-8", timeout: 110_000 },
  );
  if (prepared.status !== 0) {
    throw new Error(`fixture build failed: ${prepared.stderr}`);
  }
  server = spawn(
    PYTHON,
    ["-m", "hopforge", "review-serve", "--config", join(workspace, "config.yaml"),
     "--port", String(PORT)],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  for (let attempt = 0; attempt < 100; attempt++) {
    if (await serviceUp()) return;
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error("review service did not come up");
});

afterAll(() => {
  server?.kill("SIGTERM");
  rmSync(workspace, { recursive: true, force: true });
});

describe("review round trip against the live service", () => {
  it("walks unanimity, split, dashboard and validation through the client", async () => {
    const annA = clientFor("ann-a");
    const annB = clientFor("ann-b");
    const annC = clientFor("ann-c");

    // every annotator sees the full freshly synthesized queue, ladders included
    const queueA = await annA.loadQueue("ann-a");
    expect(queueA.length).toBeGreaterThanOrEqual(6);
    for (const card of queueA) {
      expect(card.status).toBe("open");
      expect(card.item.ladder).toHaveLength(card.item.hops);
      for (const row of card.item.ladder) {
        expect(row.evidence_text).toBeTruthy();
      }
    }
    const first = queueA[0]!.item.item_id;
    const second = queueA[1]!.item.item_id;

    // --- unanimity: open -> complete on the third verdict
    let status = await annA.submitVerdict({
      item_id: first, annotator_id: "ann-a", decision: "retain", dimension_flags: [],
    });
    expect(status).toBe("open");
    let agreement = await annA.agreement();
    expect(agreement.n_items).toBe(0); // no item has all three verdicts yet

    status = await annB.submitVerdict({
      item_id: first, annotator_id: "ann-b", decision: "retain", dimension_flags: [],
    });
    expect(status).toBe("open");

    status = await annC.submitVerdict({
      item_id: first, annotator_id: "ann-c", decision: "retain", dimension_flags: [],
    });
    expect(status).toBe("complete");
    agreement = await annC.agreement();
    expect(agreement.n_items).toBe(1);
    expect(agreement.kappa).toBeNull(); // service needs 2+ complete items
    expect(agreement.per_category_marginals.retain).toBeCloseTo(1.0, 9);

    // the completed item leaves every queue
    const refreshed = await annA.loadQueue("ann-a");
    expect(refreshed.map((c) => c.item.item_id)).not.toContain(first);

    // --- a discard without flags is blocked client-side...
    await expect(
      annA.submitVerdict({
        item_id: second, annotator_id: "ann-a", decision: "discard", dimension_flags: [],
      }),
    ).rejects.toBeInstanceOf(ValidationError);
    // ...and by the service itself when the client is bypassed
    const raw = await fetch(`${BASE}/verdict`, {
      method: "POST",
      headers: { "content-type": "application/json", authorization: "Bearer token-a" },
      body: JSON.stringify({
        item_id: second, annotator_id: "ann-a", decision: "discard", dimension_flags: [],
      }),
    });
    expect(raw.status).toBe(400);

    // --- 2-1 split: open -> adjudicating
    await annA.submitVerdict({
      item_id: second, annotator_id: "ann-a", decision: "retain", dimension_flags: [],
    });
    await annB.submitVerdict({
      item_id: second, annotator_id: "ann-b", decision: "retain", dimension_flags: [],
    });
    status = await annC.submitVerdict({
      item_id: second, annotator_id: "ann-c", decision: "discard",
      dimension_flags: ["reasoning_validity"],
    });
    expect(status).toBe("adjudicating");

    // dashboard reflects the service's kappa over both completed verdict sets:
    // [3 retain] + [2 retain, 1 discard] is the -0.2 configuration
    agreement = await annA.agreement();
    expect(agreement.n_items).toBe(2);
    expect(agreement.kappa).toBeCloseTo(-0.2, 9);
    expect(agreement.adjudication_pending).toBe(1);

    // adjudication finalizes while preserving all three verdicts
    status = await annA.adjudicate(second, "retain", "chain holds; discard was a style nit");
    expect(status).toBe("finalized");
    const detail = await annA.itemDetail(second);
    expect(detail.status).toBe("finalized");
    expect(detail.verdicts).toHaveLength(3);
    expect(detail.consensus).toBe("retain");

    // wrong token is rejected
    const intruder = new ReviewClient({ baseUrl: BASE, token: "wrong" });
    await expect(intruder.loadQueue("ann-a")).rejects.toThrow();
  });
});
