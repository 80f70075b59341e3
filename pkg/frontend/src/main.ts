// Single-page annotation app: Vote / Quality / Passrate / Leaderboard tabs.
// All state lives server-side; this file only wires flows to the DOM.

import { ApiClient, ApiError } from "./api.js";
import { PassrateFlow, QualityQueue, VoteLoop } from "./flows.js";
import type { MatchView } from "./types.js";
import { clear, drawPromptOverlay, el, promptCaption, renderLeaderboard, statusLine } from "./ui.js";

const VOTE_INSTRUCTIONS =
  "Which decomposition is better? Judge how well each candidate preserves the " +
  "visible content, completes the hidden parts, and looks faithful overall. " +
  "Press A / B, or T for a tie.";

const api = new ApiClient("");
let voteLoop: VoteLoop | null = null;

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

// --- session -----------------------------------------------------------------

async function ensureSession(): Promise<void> {
  if (api.token !== null) return;
  const name = (byId<HTMLInputElement>("annotator").value || "anonymous").trim();
  await api.createSession(name);
  statusLine(byId("session-status"), `session active for ${name}`);
}

// --- vote tab -----------------------------------------------------------------

let countdownTimer: number | undefined;

function renderMatch(match: MatchView): void {
  const caption = byId("vote-prompt");
  caption.textContent = promptCaption(match.prompt);
  void drawPromptOverlay(
    byId<HTMLCanvasElement>("vote-image"),
    match.image_url,
    match.prompt,
  );
  byId<HTMLImageElement>("preview-a").src = match.a.preview_url;
  byId<HTMLImageElement>("preview-b").src = match.b.preview_url;

  window.clearInterval(countdownTimer);
  countdownTimer = window.setInterval(() => {
    if (voteLoop === null) return;
    const remaining = voteLoop.leaseRemainingSec();
    byId("vote-countdown").textContent = `${Math.ceil(remaining)}s`;
    const expired = voteLoop.leaseExpired();
    for (const id of ["vote-a", "vote-b", "vote-tie"]) {
      byId<HTMLButtonElement>(id).disabled = expired;
    }
    if (expired) statusLine(byId("vote-status"), "lease expired; fetching a fresh match");
  }, 250);
}

async function startVoting(): Promise<void> {
  await ensureSession();
  voteLoop = new VoteLoop(api, {
    onMatch: renderMatch,
    onVoteAccepted: () => {
      statusLine(byId("vote-status"), `${voteLoop?.votesAccepted ?? 0} votes recorded`);
      void refreshLeaderboard();
    },
    onError: (err) => {
      const message = err instanceof Error ? err.message : String(err);
      statusLine(byId("vote-status"), `${message} — retry with Start`, "error");
    },
  });
  await voteLoop.advance();
}

function voteKeyHandler(event: KeyboardEvent): void {
  if (voteLoop === null || !isTabActive("vote")) return;
  const key = event.key.toLowerCase();
  if (key === "a") void voteLoop.vote("a");
  else if (key === "b") void voteLoop.vote("b");
  else if (key === "t") void voteLoop.vote("tie");
}

// --- quality tab -----------------------------------------------------------------

let qualityQueue: QualityQueue | null = null;

async function startQuality(): Promise<void> {
  await ensureSession();
  qualityQueue = new QualityQueue(api);
  const n = await qualityQueue.load();
  statusLine(byId("quality-status"), `${n} layers to review`);
  renderQualityItem();
}

function renderQualityItem(): void {
  const item = qualityQueue?.current() ?? null;
  const panel = byId("quality-panel");
  if (qualityQueue === null || item === null) {
    panel.hidden = true;
    statusLine(byId("quality-status"), "queue complete");
    return;
  }
  panel.hidden = false;
  byId("quality-title").textContent =
    `${item.sampleId} / ${item.layer.id} (${item.layer.kind})`;
  byId<HTMLImageElement>("quality-preview").src = item.layer.preview_url;
  byId("quality-fg-toggles").hidden = !qualityQueue.showsForegroundToggles();
  byId("quality-status").textContent = `${qualityQueue.remaining()} remaining`;
}

async function submitQuality(quality: "good" | "neutral" | "poor"): Promise<void> {
  if (qualityQueue === null) return;
  const salient = byId<HTMLInputElement>("quality-salient").checked;
  const occluded = byId<HTMLInputElement>("quality-occluded").checked;
  await qualityQueue.submit(quality, salient, occluded);
  renderQualityItem();
}

// --- passrate tab -----------------------------------------------------------------

let passrateFlow: PassrateFlow | null = null;

async function startPassrate(): Promise<void> {
  await ensureSession();
  const modelId = byId<HTMLInputElement>("passrate-model").value.trim();
  const k = Math.max(1, Number(byId<HTMLInputElement>("passrate-k").value) || 1);
  passrateFlow = new PassrateFlow(api, modelId, k);
  const n = await passrateFlow.load();
  statusLine(byId("passrate-status"), `${n} samples for ${modelId} at K=${k}`);
  renderPassrateItem();
}

function renderPassrateItem(): void {
  const item = passrateFlow?.current() ?? null;
  const grid = byId("passrate-grid");
  clear(grid);
  byId("passrate-panel").hidden = item === null;
  if (item === null || passrateFlow === null) {
    void passrateFlow?.report().then((report) => {
      statusLine(
        byId("passrate-status"),
        `Passrate@${report.k} for ${report.model_id}: ` +
          `${(report.passrate * 100).toFixed(0)}% over ${report.n_samples} samples`,
      );
    }).catch(() => statusLine(byId("passrate-status"), "no verdicts recorded yet"));
    return;
  }
  byId("passrate-title").textContent = `${item.sampleId} / ${item.layerId}`;
  for (const url of item.previewUrls) {
    const img = el("img", "passrate-preview");
    img.src = url;
    grid.appendChild(img);
  }
}

// --- leaderboard tab ----------------------------------------------------------------

async function refreshLeaderboard(): Promise<void> {
  const rows = await api.leaderboard();
  renderLeaderboard(byId<HTMLTableElement>("leaderboard-table"), rows);
}

// --- tabs & wiring ---------------------------------------------------------------------

function isTabActive(name: string): boolean {
  return !byId(`tab-${name}`).hidden;
}

function showTab(name: string): void {
  for (const tab of ["vote", "quality", "passrate", "leaderboard"]) {
    byId(`tab-${tab}`).hidden = tab !== name;
    byId(`nav-${tab}`).classList.toggle("active", tab === name);
  }
  if (name === "leaderboard") void refreshLeaderboard();
}

function wire(): void {
  byId("vote-instructions").textContent = VOTE_INSTRUCTIONS;
  for (const tab of ["vote", "quality", "passrate", "leaderboard"]) {
    byId(`nav-${tab}`).addEventListener("click", () => showTab(tab));
  }
  byId("vote-start").addEventListener("click", () => void startVoting().catch(reportFatal));
  byId("vote-a").addEventListener("click", () => void voteLoop?.vote("a"));
  byId("vote-b").addEventListener("click", () => void voteLoop?.vote("b"));
  byId("vote-tie").addEventListener("click", () => void voteLoop?.vote("tie"));
  document.addEventListener("keydown", voteKeyHandler);

  byId("quality-start").addEventListener("click", () => void startQuality().catch(reportFatal));
  for (const label of ["good", "neutral", "poor"] as const) {
    byId(`quality-${label}`).addEventListener(
      "click",
      () => void submitQuality(label).catch(reportFatal),
    );
  }

  byId("passrate-start").addEventListener("click", () => void startPassrate().catch(reportFatal));
  byId("passrate-yes").addEventListener("click", () => void submitPassrateVerdict(true));
  byId("passrate-no").addEventListener("click", () => void submitPassrateVerdict(false));

  showTab("vote");
}

async function submitPassrateVerdict(satisfied: boolean): Promise<void> {
  if (passrateFlow === null) return;
  await passrateFlow.submit(satisfied);
  renderPassrateItem();
}

function reportFatal(err: unknown): void {
  const message =
    err instanceof ApiError ? err.message : err instanceof Error ? err.message : String(err);
  statusLine(byId("session-status"), message, "error");
}

document.addEventListener("DOMContentLoaded", wire);
