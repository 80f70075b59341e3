// Wire types for the annotation service API (all under /api).

export type SpatialPromptDto =
  | { type: "point"; value: [number, number] }
  | { type: "box"; value: [number, number, number, number] }
  | { type: "mask"; path: string }
  | { type: "background" };

export type PromptDto =
  | SpatialPromptDto
  | { type: "text"; value: string }
  | { type: "combo"; text: string; spatial: SpatialPromptDto };

export interface MatchSide {
  label: string;
  preview_url: string;
}

export interface MatchView {
  match_id: string;
  sample_id: string;
  image_url: string;
  prompt: PromptDto | null;
  prompts: PromptDto[];
  a: MatchSide;
  b: MatchSide;
  expires_at: number; // epoch seconds
}

export type VoteOutcome = "a" | "b" | "tie";

export interface ResultResponse {
  ok: boolean;
  new_leaderboard_version: number;
}

export interface LeaderboardRow {
  model_id: string;
  rating: number;
  matches: number;
}

export interface SampleIndexLayer {
  id: string;
  kind: "foreground" | "background";
  prompts: PromptDto[];
}

export interface SampleIndexEntry {
  id: string;
  layers: SampleIndexLayer[];
}

export interface SampleDetailLayer extends SampleIndexLayer {
  quality: "good" | "neutral" | "poor" | null;
  salient: boolean | null;
  occluded: boolean | null;
  preview_url: string;
}

export interface SampleDetail {
  id: string;
  image_url: string;
  background_url: string | null;
  layers: SampleDetailLayer[];
}

export type QualityLabel = "good" | "neutral" | "poor";

export interface QualityVerdict {
  sample_id: string;
  layer_id: string;
  quality: QualityLabel;
  salient?: boolean;
  occluded?: boolean;
}

export interface PassrateVerdict {
  sample_id: string;
  layer_id: string;
  model_id: string;
  k: number;
  satisfied: boolean;
}

export interface PassrateReport {
  model_id: string;
  k: number;
  passrate: number;
  n_samples: number;
}

export interface QualityTally {
  good: number;
  neutral: number;
  poor: number;
  unlabeled: number;
  pass_share: number | null;
}

export interface QualityReport {
  audit: { foreground: QualityTally; background: QualityTally };
  n_annotations: number;
}

// model -> "sample/layer" -> number of generated outputs (K)
export type PredictionIndex = Record<string, Record<string, number>>;
