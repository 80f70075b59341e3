// DOM rendering helpers. Prompt overlays reuse the dataset's color coding:
// solid blue = background, green box, red mask region, heat bump for points.

import type { LeaderboardRow, PromptDto, SpatialPromptDto } from "./types.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

function spatialPart(prompt: PromptDto): SpatialPromptDto | null {
  if (prompt.type === "combo") return prompt.spatial;
  if (prompt.type === "text") return null;
  return prompt;
}

export function promptCaption(prompt: PromptDto | null): string {
  if (prompt === null) return "(no prompt)";
  switch (prompt.type) {
    case "text":
      return `“${prompt.value}”`;
    case "combo":
      return `“${prompt.text}” + ${prompt.spatial.type}`;
    case "point":
      return `point (${prompt.value[0]}, ${prompt.value[1]})`;
    case "box":
      return `box [${prompt.value.join(", ")}]`;
    case "mask":
      return "mask region";
    case "background":
      return "background";
  }
}

/** Draw the sample image with its prompt overlaid on a canvas. */
export async function drawPromptOverlay(
  canvas: HTMLCanvasElement,
  imageUrl: string,
  prompt: PromptDto | null,
): Promise<void> {
  const img = await loadImage(imageUrl);
  canvas.width = img.naturalWidth;
  canvas.height = img.naturalHeight;
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;
  ctx.drawImage(img, 0, 0);
  const spatial = prompt === null ? null : spatialPart(prompt);
  if (spatial === null) return;

  if (spatial.type === "background") {
    ctx.fillStyle = "rgba(0, 0, 255, 0.25)";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
  } else if (spatial.type === "box") {
    const [x0, y0, x1, y1] = spatial.value;
    ctx.strokeStyle = "rgb(0, 255, 0)";
    ctx.lineWidth = Math.max(2, canvas.width / 128);
    ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
  } else if (spatial.type === "point") {
    const [x, y] = spatial.value;
    const sigma = 0.015 * Math.hypot(canvas.width, canvas.height);
    const glow = ctx.createRadialGradient(x, y, 0, x, y, 3 * sigma);
    glow.addColorStop(0, "rgba(255, 255, 255, 0.95)");
    glow.addColorStop(1, "rgba(255, 255, 255, 0)");
    ctx.fillStyle = glow;
    ctx.fillRect(0, 0, canvas.width, canvas.height);
  } else if (spatial.type === "mask") {
    const mask = await loadImage(`/api/asset/${spatial.path}`);
    const scratch = document.createElement("canvas");
    scratch.width = canvas.width;
    scratch.height = canvas.height;
    const sctx = scratch.getContext("2d");
    if (sctx === null) return;
    sctx.drawImage(mask, 0, 0, scratch.width, scratch.height);
    sctx.globalCompositeOperation = "source-in";
    sctx.fillStyle = "rgba(255, 0, 0, 0.45)";
    sctx.fillRect(0, 0, scratch.width, scratch.height);
    ctx.drawImage(scratch, 0, 0);
  }
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`failed to load ${url}`));
    img.src = url;
  });
}

export function renderLeaderboard(table: HTMLTableElement, rows: LeaderboardRow[]): void {
  clear(table);
  const head = table.createTHead().insertRow();
  for (const title of ["#", "Model", "Rating", "Matches"]) {
    head.appendChild(el("th", "", title));
  }
  const body = table.createTBody();
  rows.forEach((row, i) => {
    const tr = body.insertRow();
    tr.insertCell().textContent = String(i + 1);
    tr.insertCell().textContent = row.model_id;
    // ratings come from the service verbatim; the UI only formats
    tr.insertCell().textContent = row.rating.toFixed(1);
    tr.insertCell().textContent = String(row.matches);
  });
}

export function statusLine(node: HTMLElement, text: string, kind: "info" | "error" = "info"): void {
  node.textContent = text;
  node.className = kind === "error" ? "status status-error" : "status";
}
