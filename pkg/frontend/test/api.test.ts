import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { twoModelFixture } from "./mock_server.js";

describe("api client", () => {
  it("stores the session token and sends it on mutating calls", async () => {
    const server = twoModelFixture();
    const api = new ApiClient("http://mock", server.fetch);
    const token = await api.createSession("ann");
    expect(api.token).toBe(token);
    const match = await api.nextMatch();
    const result = await api.submitResult(match.match_id, "tie");
    expect(result.ok).toBe(true);
  });

  it("throws before a session exists", async () => {
    const server = twoModelFixture();
    const api = new ApiClient("http://mock", server.fetch);
    await expect(api.nextMatch()).rejects.toThrowError(ApiError);
  });

  it("maps structured server errors to ApiError with code and status", async () => {
    const server = twoModelFixture();
    const api = new ApiClient("http://mock", server.fetch);
    await api.createSession("ann");
    try {
      await api.submitResult("missing-match", "a");
      expect.unreachable("submit must fail");
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      expect((err as ApiError).status).toBe(409);
      expect((err as ApiError).code).toBe("StaleLease");
    }
  });

  it("rejects invalid tokens with 401", async () => {
    const server = twoModelFixture();
    const api = new ApiClient("http://mock", server.fetch);
    api.token = "forged";
    try {
      await api.nextMatch();
      expect.unreachable("request must fail");
    } catch (err) {
      expect((err as ApiError).status).toBe(401);
    }
  });

  it("builds prediction preview urls with encoded path segments", () => {
    const api = new ApiClient("http://mock", twoModelFixture().fetch);
    const url = api.predictionPreviewUrl("m/1", "s0", "l0", 2);
    expect(url).toBe("http://mock/api/preview/pred/m%2F1/s0/l0/2");
  });
});
