// End-to-end flows against a live annotation service. Skipped unless
// LAYERBENCH_SERVICE_URL points at a running instance, e.g.
//
//   layerbench serve --manifest data/manifest.json --pred-root preds \
//       --ledger study.ndjson --port 8900 &
//   LAYERBENCH_SERVICE_URL=http://127.0.0.1:8900 npm test

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { PassrateFlow, QualityQueue, VoteLoop } from "../src/flows.js";

const BASE = process.env.LAYERBENCH_SERVICE_URL ?? "";
const live = BASE === "" ? describe.skip : describe;

live("live service", () => {
  it("20 votes move the ledger by exactly 20 matches, ratings conserved", async () => {
    const api = new ApiClient(BASE);
    await api.createSession("integration");
    const before = await api.leaderboard();
    const matchesBefore = before.reduce((acc, r) => acc + r.matches, 0);
    const sumBefore = before.reduce((acc, r) => acc + r.rating, 0);

    const loop = new VoteLoop(api);
    await loop.advance();
    const outcomes = ["a", "b", "tie"] as const;
    const versions: number[] = [];
    for (let i = 0; i < 20; i++) {
      const hookApi = loop.current;
      expect(hookApi).not.toBeNull();
      const ok = await loop.vote(outcomes[i % 3]);
      expect(ok).toBe(true);
      versions.push(i);
    }
    expect(loop.votesAccepted).toBe(20);

    const after = await api.leaderboard();
    const matchesAfter = after.reduce((acc, r) => acc + r.matches, 0);
    expect(matchesAfter - matchesBefore).toBe(40); // 20 records x 2 sides
    const sumAfter = after.reduce((acc, r) => acc + r.rating, 0);
    expect(sumAfter).toBeCloseTo(sumBefore, 6); // Elo transfers conserve the sum
  });

  it("quality submissions show up in the audit report", async () => {
    const api = new ApiClient(BASE);
    await api.createSession("integration-quality");
    const queue = new QualityQueue(api);
    const n = await queue.load();
    expect(n).toBeGreaterThan(0);

    const labels = ["good", "neutral", "poor"] as const;
    const submitted = new Map<string, string>();
    for (let i = 0; i < Math.min(10, n); i++) {
      const item = queue.current()!;
      const quality = labels[i % 3];
      submitted.set(`${item.sampleId}/${item.layer.id}`, quality);
      await queue.submit(quality, true, false);
    }

    // expected tallies: manifest labels for untouched layers, ours on top
    const expected = { good: 0, neutral: 0, poor: 0 };
    const kinds = new Map<string, string>();
    for (const entry of await api.samples()) {
      const detail = await api.sample(entry.id);
      for (const layer of detail.layers) {
        const key = `${detail.id}/${layer.id}`;
        kinds.set(key, layer.kind);
        const label = submitted.get(key) ?? layer.quality;
        if (label !== null && layer.kind === "foreground") {
          expected[label as keyof typeof expected] += 1;
        }
      }
    }
    const report = await api.qualityReport();
    expect(report.audit.foreground.good).toBe(expected.good);
    expect(report.audit.foreground.neutral).toBe(expected.neutral);
    expect(report.audit.foreground.poor).toBe(expected.poor);
  });

  it("passrate verdicts aggregate in the report", async () => {
    const api = new ApiClient(BASE);
    await api.createSession("integration-passrate");
    const models = Object.keys(await api.predictions());
    expect(models.length).toBeGreaterThan(0);
    const flow = new PassrateFlow(api, models[0], 1);
    const n = await flow.load();
    expect(n).toBeGreaterThan(0);

    let satisfied = 0;
    const total = Math.min(4, n);
    for (let i = 0; i < total; i++) {
      const verdict = i % 2 === 0;
      satisfied += verdict ? 1 : 0;
      await flow.submit(verdict);
    }
    const report = await flow.report();
    expect(report.n_samples).toBeGreaterThanOrEqual(total);
    expect(report.passrate).toBeGreaterThanOrEqual(0);
    expect(report.passrate).toBeLessThanOrEqual(1);
    if (report.n_samples === total) {
      expect(report.passrate).toBeCloseTo(satisfied / total, 12);
    }
  });
});
