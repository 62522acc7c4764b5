/**
 * End-to-end oracle equivalence: a scripted session drives the same
 * controller/state code the DOM handlers call, submits the gold labels for
 * every queried sentence, and must reproduce, point for point, the curve of
 * a simulated gold-oracle run with the same config and seed.
 *
 * Spawns the Python annotation service; enable with RUN_SERVICE_TESTS=1.
 */

import { spawn, execFileSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import type { Label } from "../src/api.js";
import { ServiceClient } from "../src/api.js";
import { SessionController } from "../src/controller.js";

const RUN = process.env.RUN_SERVICE_TESTS === "1";
const PYTHON = process.env.PYTHON ?? "python3";
const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;

let service: ChildProcess | null = null;
let workDir = "";
let gold: Map<string, Label[]>;

function configText(dir: string): string {
  return [
    `corpus = ${join(dir, "data", "corpus.tsv")}`,
    `embeddings = static:${join(dir, "data", "vectors.txt")}`,
    "model = lincrf",
    "strategy = uncertainty-entropy",
    "start = cold",
    "seeds = 17",
    "batch_size = 16",
    "budget = 48",
    "oracle = human",
    `output = ${join(dir, "sessions")}`,
    "max_epochs = 5",
    "min_epochs = 2",
    "patience = 2",
    "",
  ].join("\n");
}

function loadGold(corpusPath: string): Map<string, Label[]> {
  const rows = readFileSync(corpusPath, "utf-8").split("\n");
  const map = new Map<string, Label[]>();
  for (const row of rows) {
    if (!row || row.startsWith("#")) continue;
    const [id, , , , labelStr] = row.split("\t");
    if (id && labelStr) map.set(id, labelStr.split(" ") as Label[]);
  }
  return map;
}

async function waitForService(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE}/sessions/nope/status`);
      if (response.status === 404) return;
    } catch {
      // not listening yet
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error("service did not come up");
}

describe.runIf(RUN)("scripted annotation session", () => {
  beforeAll(async () => {
    workDir = mkdtempSync(join(tmpdir(), "argal-ui-"));
    execFileSync(PYTHON, ["-m", "argal.synthetic", join(workDir, "data")]);
    writeFileSync(join(workDir, "service.cfg"), configText(workDir));
    gold = loadGold(join(workDir, "data", "corpus.tsv"));
    service = spawn(
      PYTHON,
      ["-m", "argal.cli", "serve", "--config", join(workDir, "service.cfg"), "--port", String(PORT)],
      { stdio: "ignore" },
    );
    await waitForService();
  }, 60000);

  afterAll(() => {
    service?.kill();
  });

  it("reproduces the gold-oracle curve point for point", async () => {
    const client = new ServiceClient(BASE);
    const { id: sessionId } = await client.createSession({});
    const controller = new SessionController(client, sessionId);

    await controller.refresh();
    while (controller.status !== "finished") {
      expect(controller.status).toBe("awaiting_labels");
      const batch = controller.batch!;
      for (const item of batch.items) {
        const labels = gold.get(item.id);
        expect(labels, `gold labels for ${item.id}`).toBeDefined();
        expect(labels!.length).toBe(item.tokens.length);
        // annotate through the UI surface: NON is prefilled; PRO/CON gold
        // runs are applied as span selections, exactly like drag-labeling
        let start = -1;
        for (let index = 0; index <= labels!.length; index++) {
          const label = labels![index];
          const prev = start >= 0 ? labels![start] : null;
          if (label !== prev) {
            if (start >= 0 && prev !== "NON" && prev != null) {
              controller.labelSpan(item.id, start, index - 1, prev);
            }
            start = index;
          }
        }
        expect(batch.canSubmit(item.id)).toBe(true);
        const payload = batch.payload(item.id);
        expect(payload.labels).toEqual(labels); // wire payload equals the selections
        await controller.submitItem(item.id);
      }
      expect(batch.allDone()).toBe(true);
      await controller.waitWhileTraining(100, 180000);
    }

    const serviceCurve = await client.getCurve(controller.sessionId);
    expect(serviceCurve.length).toBeGreaterThanOrEqual(3);

    // reference: a gold-oracle CLI run with the same config and seed
    const goldCfg = configText(workDir)
      .replace("oracle = human", "oracle = gold")
      .replace(/output = .*/, `output = ${join(workDir, "gold-run")}`)
      .concat("baseline_f1 = 0.8\n");
    writeFileSync(join(workDir, "gold.cfg"), goldCfg);
    execFileSync(PYTHON, ["-m", "argal.cli", "run", "--config", join(workDir, "gold.cfg")]);
    const csv = readFileSync(join(workDir, "gold-run", "curve.seed-17.csv"), "utf-8");
    const reference = csv
      .trim()
      .split("\n")
      .slice(1)
      .map((row) => {
        const [count, f1] = row.split(",");
        return [Number(count), Number(f1)];
      });

    expect(serviceCurve.map((p) => [p.labeled_count, p.dev_macro_f1])).toEqual(reference);
  }, 300000);

  it("never exposes gold labels through the batch endpoint", async () => {
    const client = new ServiceClient(BASE);
    const { id: sessionId } = await client.createSession({});
    const response = await fetch(`${BASE}/sessions/${sessionId}/batch`);
    const text = await response.text();
    expect(response.status).toBe(200);
    const body = JSON.parse(text) as { items: Record<string, unknown>[] };
    for (const item of body.items) {
      expect(Object.keys(item).sort()).toEqual(["id", "submitted", "tokens", "topic"]);
    }
    expect(text).not.toMatch(/"gold/);
  });
});
