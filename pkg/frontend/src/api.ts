// Typed client for the annotation service. The fetch implementation is
// injectable so flows can be tested against an in-memory server.

import type {
  LeaderboardRow,
  MatchView,
  PassrateReport,
  PassrateVerdict,
  PredictionIndex,
  QualityReport,
  QualityVerdict,
  ResultResponse,
  SampleDetail,
  SampleIndexEntry,
  VoteOutcome,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let code = "HttpError";
  let detail = resp.statusText;
  try {
    const body = (await resp.json()) as { error?: string; detail?: string };
    if (body.error) code = body.error;
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(resp.status, code, `${resp.status} ${code}: ${detail}`);
}

export class ApiClient {
  token: string | null = null;

  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  private requireToken(): string {
    if (this.token === null) throw new ApiError(401, "NoSession", "create a session first");
    return this.token;
  }

  async createSession(annotatorId: string): Promise<string> {
    const body = await this.post<{ token: string }>("/api/session", {
      annotator_id: annotatorId,
    });
    this.token = body.token;
    return body.token;
  }

  async nextMatch(): Promise<MatchView> {
    const token = encodeURIComponent(this.requireToken());
    return this.get<MatchView>(`/api/match/next?token=${token}`);
  }

  async submitResult(matchId: string, outcome: VoteOutcome): Promise<ResultResponse> {
    return this.post<ResultResponse>("/api/match/result", {
      token: this.requireToken(),
      match_id: matchId,
      outcome,
    });
  }

  async leaderboard(): Promise<LeaderboardRow[]> {
    return this.get<LeaderboardRow[]>("/api/leaderboard");
  }

  async samples(): Promise<SampleIndexEntry[]> {
    return this.get<SampleIndexEntry[]>("/api/samples");
  }

  async sample(sampleId: string): Promise<SampleDetail> {
    return this.get<SampleDetail>(`/api/sample/${encodeURIComponent(sampleId)}`);
  }

  async submitQuality(verdict: QualityVerdict): Promise<void> {
    await this.post<{ ok: boolean }>("/api/quality", {
      token: this.requireToken(),
      ...verdict,
    });
  }

  async submitPassrate(verdict: PassrateVerdict): Promise<void> {
    await this.post<{ ok: boolean }>("/api/passrate", {
      token: this.requireToken(),
      ...verdict,
    });
  }

  async passrateReport(modelId: string, k: number): Promise<PassrateReport> {
    const q = `model_id=${encodeURIComponent(modelId)}&k=${k}`;
    return this.get<PassrateReport>(`/api/report/passrate?${q}`);
  }

  async qualityReport(): Promise<QualityReport> {
    return this.get<QualityReport>("/api/report/quality");
  }

  async predictions(): Promise<PredictionIndex> {
    return this.get<PredictionIndex>("/api/predictions");
  }

  predictionPreviewUrl(modelId: string, sampleId: string, layerId: string, k: number): string {
    const parts = [modelId, sampleId, layerId].map(encodeURIComponent);
    return `${this.baseUrl}/api/preview/pred/${parts.join("/")}/${k}`;
  }
}
