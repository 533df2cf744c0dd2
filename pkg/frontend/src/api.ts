/** Typed client for the capture3d v1 HTTP API. */

import type { Point } from "./stroke.js";

export interface CaptureInfo {
  session_id: string;
  state: string;
  mode: string;
  width: number;
  height: number;
  object_count: number;
}

export interface ZoneSummary {
  state: string;
  zone: { vertex_count: number; area_px2: number; vertices: number[][] };
  object_count: number;
  detection_ms: number;
}

export interface MenuEntry {
  object_id: string;
  label: string;
  confidence: number;
  thumbnail_png_base64: string;
  width_px: number;
  height_px: number;
}

export interface JobView {
  job_id: string;
  state: "queued" | "running" | "succeeded" | "failed";
  error: string | null;
  timings: {
    conversion_ms: number | null;
    simplify_ms: number | null;
    load_render_ms: number | null;
  };
  mesh: { vertices: number; faces: number } | null;
}

export interface MetricsEntry {
  count: number;
  mean?: number;
  p50?: number;
  p95?: number;
}

export type MetricsReport = Record<string, MetricsEntry>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      let code = `HTTP${resp.status}`;
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        code = body.error ?? code;
        detail = body.detail ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, code, detail);
    }
    return resp;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.request(path, init);
    return (await resp.json()) as T;
  }

  private post(body: unknown): RequestInit {
    return {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    };
  }

  createCapture(imagePngBase64: string, mode: "zone" | "all"): Promise<CaptureInfo> {
    return this.json("/v1/captures", this.post({ image_png_base64: imagePngBase64, mode }));
  }

  appendStroke(sessionId: string, points: readonly Point[]): Promise<{ accepted: number; total: number }> {
    const payload = { points: points.map((p) => [p.x, p.y]) };
    return this.json(`/v1/captures/${sessionId}/stroke`, this.post(payload));
  }

  finalize(sessionId: string): Promise<ZoneSummary> {
    return this.json(`/v1/captures/${sessionId}/finalize`, { method: "POST" });
  }

  async listObjects(sessionId: string): Promise<MenuEntry[]> {
    const body = await this.json<{ objects: MenuEntry[] }>(`/v1/captures/${sessionId}/objects`);
    return body.objects;
  }

  async generate(sessionId: string, objectIds: string[], backend?: string): Promise<string[]> {
    const body = await this.json<{ job_ids: string[] }>(
      `/v1/captures/${sessionId}/generate`,
      this.post({ object_ids: objectIds, backend: backend ?? null }),
    );
    return body.job_ids;
  }

  jobStatus(jobId: string): Promise<JobView> {
    return this.json(`/v1/jobs/${jobId}`);
  }

  async fetchAsset(jobId: string): Promise<ArrayBuffer> {
    const resp = await this.request(`/v1/jobs/${jobId}/asset`);
    return await resp.arrayBuffer();
  }

  postLoadRender(jobId: string, loadRenderMs: number): Promise<{ ok: boolean }> {
    return this.json("/v1/metrics/load-render", this.post({ job_id: jobId, load_render_ms: loadRenderMs }));
  }

  metrics(): Promise<MetricsReport> {
    return this.json("/v1/metrics");
  }
}

/** Poll a job at a fixed cadence until it reaches a terminal state. */
export async function pollJob(
  api: ApiClient,
  jobId: string,
  opts: { intervalMs?: number; timeoutMs?: number; onUpdate?: (view: JobView) => void } = {},
): Promise<JobView> {
  const interval = opts.intervalMs ?? 1000;
  const deadline = Date.now() + (opts.timeoutMs ?? 180_000);
  for (;;) {
    const view = await api.jobStatus(jobId);
    opts.onUpdate?.(view);
    if (view.state === "succeeded" || view.state === "failed") {
      return view;
    }
    if (Date.now() > deadline) {
      throw new Error(`job ${jobId} still ${view.state} after timeout`);
    }
    await new Promise((resolve) => setTimeout(resolve, interval));
  }
}
