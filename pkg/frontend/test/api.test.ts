import { describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError, pollJob } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function recordingClient(replies: Record<string, unknown>) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fetchFn = vi.fn(async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const key = `${init?.method ?? "GET"} ${url}`;
    if (!(key in replies)) throw new Error(`unexpected request ${key}`);
    const reply = replies[key];
    if (typeof reply === "function") return reply() as Response;
    return jsonResponse(reply);
  });
  return { api: new ApiClient("http://srv", fetchFn), calls };
}

describe("ApiClient", () => {
  it("creates captures with the documented body", async () => {
    const { api, calls } = recordingClient({
      "POST http://srv/v1/captures": {
        session_id: "s1",
        state: "open",
        mode: "zone",
        width: 640,
        height: 480,
        object_count: 0,
      },
    });
    const info = await api.createCapture("QUJD", "zone");
    expect(info.session_id).toBe("s1");
    const body = JSON.parse(String(calls[0].init?.body));
    expect(body).toEqual({ image_png_base64: "QUJD", mode: "zone" });
  });

  it("streams stroke points as [x, y] pairs", async () => {
    const { api, calls } = recordingClient({
      "POST http://srv/v1/captures/s1/stroke": { accepted: 2, total: 2 },
    });
    await api.appendStroke("s1", [
      { x: 1.5, y: 2 },
      { x: 3, y: 4 },
    ]);
    const body = JSON.parse(String(calls[0].init?.body));
    expect(body.points).toEqual([
      [1.5, 2],
      [3, 4],
    ]);
  });

  it("sends exactly the checked object ids to generate", async () => {
    const { api, calls } = recordingClient({
      "POST http://srv/v1/captures/s1/generate": { job_ids: ["j1"] },
    });
    const jobs = await api.generate("s1", ["obj-7"]);
    expect(jobs).toEqual(["j1"]); // one checked object -> exactly one job
    const body = JSON.parse(String(calls[0].init?.body));
    expect(body.object_ids).toEqual(["obj-7"]);
  });

  it("lists menu entries verbatim", async () => {
    const entries = [
      { object_id: "a", label: "green", confidence: 1, thumbnail_png_base64: "", width_px: 4, height_px: 4 },
      { object_id: "b", label: "blue", confidence: 1, thumbnail_png_base64: "", width_px: 4, height_px: 4 },
    ];
    const { api } = recordingClient({ "GET http://srv/v1/captures/s1/objects": { objects: entries } });
    expect(await api.listObjects("s1")).toEqual(entries);
  });

  it("posts load-render samples", async () => {
    const { api, calls } = recordingClient({
      "POST http://srv/v1/metrics/load-render": { ok: true },
    });
    await api.postLoadRender("j1", 321.5);
    const body = JSON.parse(String(calls[0].init?.body));
    expect(body).toEqual({ job_id: "j1", load_render_ms: 321.5 });
  });

  it("surfaces server error codes", async () => {
    const { api } = recordingClient({
      "POST http://srv/v1/captures/s1/finalize": () =>
        jsonResponse({ error: "StrokeTooShort", detail: "need at least 3 distinct points" }, 422),
    });
    await expect(api.finalize("s1")).rejects.toThrowError(ApiError);
    await expect(api.finalize("s1")).rejects.toMatchObject({ status: 422, code: "StrokeTooShort" });
  });
});

describe("pollJob", () => {
  it("polls until the job is terminal", async () => {
    const states = ["queued", "running", "succeeded"];
    let call = 0;
    const fetchFn = vi.fn(async () =>
      jsonResponse({
        job_id: "j1",
        state: states[Math.min(call++, 2)],
        error: null,
        timings: { conversion_ms: null, simplify_ms: null, load_render_ms: null },
        mesh: null,
      }),
    );
    const api = new ApiClient("http://srv", fetchFn);
    const seen: string[] = [];
    const view = await pollJob(api, "j1", { intervalMs: 1, onUpdate: (v) => seen.push(v.state) });
    expect(view.state).toBe("succeeded");
    expect(seen).toEqual(["queued", "running", "succeeded"]);
    expect(fetchFn).toHaveBeenCalledTimes(3);
  });
});
