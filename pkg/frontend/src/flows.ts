// Annotation flow state machines. No scoring logic lives here: every number
// shown to an annotator is fetched from the service.

import { ApiClient, ApiError } from "./api.js";
import type {
  MatchView,
  PassrateReport,
  QualityLabel,
  SampleDetailLayer,
  VoteOutcome,
} from "./types.js";

export interface VoteHooks {
  onMatch?: (match: MatchView) => void;
  onVoteAccepted?: (matchId: string, leaderboardVersion: number) => void;
  onError?: (err: unknown) => void;
}

/** Pairwise voting loop: fetch a match, accept one vote, fetch the next.
 *
 * Votes are at-most-once per match: the loop refuses a second submit for the
 * current match, treats a 409 from the server as "already settled or lease
 * lost" and silently advances, and discards expired leases locally.
 */
export class VoteLoop {
  current: MatchView | null = null;
  votesAccepted = 0;
  private submitting = false;

  constructor(
    private readonly api: ApiClient,
    private readonly hooks: VoteHooks = {},
    private readonly now: () => number = () => Date.now(),
  ) {}

  leaseRemainingSec(): number {
    if (this.current === null) return 0;
    return Math.max(0, this.current.expires_at - this.now() / 1000);
  }

  leaseExpired(): boolean {
    return this.current !== null && this.leaseRemainingSec() <= 0;
  }

  canVote(): boolean {
    return this.current !== null && !this.submitting && !this.leaseExpired();
  }

  async advance(): Promise<MatchView | null> {
    try {
      this.current = await this.api.nextMatch();
      this.submitting = false;
      this.hooks.onMatch?.(this.current);
      return this.current;
    } catch (err) {
      this.current = null;
      this.hooks.onError?.(err);
      return null;
    }
  }

  async vote(outcome: VoteOutcome): Promise<boolean> {
    if (this.current === null || this.submitting) return false;
    if (this.leaseExpired()) {
      // lease ran out while the annotator hesitated: discard and refetch
      await this.advance();
      return false;
    }
    this.submitting = true;
    const matchId = this.current.match_id;
    try {
      const result = await this.api.submitResult(matchId, outcome);
      this.votesAccepted += 1;
      this.hooks.onVoteAccepted?.(matchId, result.new_leaderboard_version);
    } catch (err) {
      if (!(err instanceof ApiError && err.status === 409)) {
        this.submitting = false;
        this.hooks.onError?.(err);
        return false;
      }
      // stale lease or duplicate: the server kept at most one record
    }
    await this.advance();
    return true;
  }
}

export interface QualityItem {
  sampleId: string;
  layer: SampleDetailLayer;
}

/** Sequential layer-quality review over every layer in the dataset. */
export class QualityQueue {
  private items: QualityItem[] = [];
  private index = 0;
  submitted = 0;

  constructor(private readonly api: ApiClient) {}

  async load(): Promise<number> {
    const index = await this.api.samples();
    this.items = [];
    for (const entry of index) {
      const detail = await this.api.sample(entry.id);
      for (const layer of detail.layers) {
        this.items.push({ sampleId: detail.id, layer });
      }
    }
    this.index = 0;
    return this.items.length;
  }

  current(): QualityItem | null {
    return this.index < this.items.length ? this.items[this.index] : null;
  }

  remaining(): number {
    return Math.max(0, this.items.length - this.index);
  }

  /** Saliency/occlusion toggles apply to foreground layers only. */
  showsForegroundToggles(): boolean {
    return this.current()?.layer.kind === "foreground";
  }

  async submit(quality: QualityLabel, salient?: boolean, occluded?: boolean): Promise<void> {
    const item = this.current();
    if (item === null) return;
    const verdict =
      item.layer.kind === "foreground"
        ? { sample_id: item.sampleId, layer_id: item.layer.id, quality, salient, occluded }
        : { sample_id: item.sampleId, layer_id: item.layer.id, quality };
    await this.api.submitQuality(verdict);
    this.submitted += 1;
    this.index += 1;
  }

  skip(): void {
    if (this.index < this.items.length) this.index += 1;
  }
}

export interface PassrateItem {
  sampleId: string;
  layerId: string;
  previewUrls: string[];
}

/** Passrate@K review for one model: all K outputs per sample, one verdict. */
export class PassrateFlow {
  private items: PassrateItem[] = [];
  private index = 0;

  constructor(
    private readonly api: ApiClient,
    readonly modelId: string,
    readonly k: number,
  ) {}

  async load(): Promise<number> {
    const available = (await this.api.predictions())[this.modelId] ?? {};
    this.items = [];
    for (const [key, count] of Object.entries(available)) {
      const slash = key.indexOf("/");
      const sampleId = key.slice(0, slash);
      const layerId = key.slice(slash + 1);
      const shown = Math.min(this.k, count);
      this.items.push({
        sampleId,
        layerId,
        previewUrls: Array.from({ length: shown }, (_, i) =>
          this.api.predictionPreviewUrl(this.modelId, sampleId, layerId, i),
        ),
      });
    }
    this.items.sort((x, y) => (x.sampleId + x.layerId).localeCompare(y.sampleId + y.layerId));
    this.index = 0;
    return this.items.length;
  }

  current(): PassrateItem | null {
    return this.index < this.items.length ? this.items[this.index] : null;
  }

  async submit(satisfied: boolean): Promise<void> {
    const item = this.current();
    if (item === null) return;
    await this.api.submitPassrate({
      sample_id: item.sampleId,
      layer_id: item.layerId,
      model_id: this.modelId,
      k: this.k,
      satisfied,
    });
    this.index += 1;
  }

  async report(): Promise<PassrateReport> {
    return this.api.passrateReport(this.modelId, this.k);
  }
}
