/**
 * Page controller: upload a frame, draw the lasso, review the detected
 * objects, generate assets for the checked ones, preview the delivered
 * mesh and report load/render timing back to the metrics endpoint.
 */

import { ApiClient, ApiError, pollJob, type JobView, type MenuEntry } from "./api.js";
import { FinalizeCountdown } from "./countdown.js";
import { parseGlb } from "./glb.js";
import { StrokeBuffer } from "./stroke.js";
import { OrbitViewer } from "./viewer.js";

const STROKE_FLUSH_EVERY = 12;

interface Elements {
  fileInput: HTMLInputElement;
  modeSelect: HTMLSelectElement;
  canvas: HTMLCanvasElement;
  statusLine: HTMLElement;
  countdownLabel: HTMLElement;
  menuList: HTMLElement;
  generateButton: HTMLButtonElement;
  jobList: HTMLElement;
  previewCanvas: HTMLCanvasElement;
  metricsPane: HTMLElement;
}

export class App {
  private api: ApiClient;
  private els: Elements;
  private stroke = new StrokeBuffer();
  private unsent: [number, number][] = [];
  private sessionId: string | null = null;
  private frameBitmap: ImageBitmap | null = null;
  private drawing = false;
  private detected = false;
  private viewer: OrbitViewer | null = null;
  private countdown: FinalizeCountdown;

  constructor(api: ApiClient, els: Elements) {
    this.api = api;
    this.els = els;
    this.countdown = new FinalizeCountdown(
      () => void this.finalize(),
      (left) => (this.els.countdownLabel.textContent = `capturing in ${left}s (click to keep drawing)`),
    );
    els.fileInput.addEventListener("change", () => void this.onFile());
    els.generateButton.addEventListener("click", () => void this.onGenerate());
    els.canvas.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    els.canvas.addEventListener("pointermove", (e) => void this.onPointerMove(e));
    els.canvas.addEventListener("pointerup", () => this.onPointerUp());
    const pc = els.previewCanvas;
    pc.addEventListener("pointerdown", (e) => this.viewer?.pointerDown(e.offsetX, e.offsetY));
    pc.addEventListener("pointermove", (e) => {
      if (this.viewer?.pointerMove(e.offsetX, e.offsetY)) this.renderPreview();
    });
    pc.addEventListener("pointerup", () => this.viewer?.pointerUp());
  }

  private status(text: string): void {
    this.els.statusLine.textContent = text;
  }

  private async onFile(): Promise<void> {
    const file = this.els.fileInput.files?.[0];
    if (!file) return;
    const buf = await file.arrayBuffer();
    const b64 = btoa(String.fromCharCode(...new Uint8Array(buf)));
    const mode = this.els.modeSelect.value === "all" ? "all" : "zone";
    try {
      const info = await this.api.createCapture(b64, mode);
      this.sessionId = info.session_id;
      this.detected = info.state === "detected";
      this.stroke.clear();
      this.unsent = [];
      this.frameBitmap = await createImageBitmap(new Blob([buf], { type: "image/png" }));
      this.els.canvas.width = info.width;
      this.els.canvas.height = info.height;
      this.redraw();
      if (this.detected) {
        this.status(`captured all: ${info.object_count} object(s) detected`);
        await this.refreshMenu();
      } else {
        this.status("draw a red line around the objects to capture");
      }
    } catch (err) {
      this.report(err);
    }
  }

  private onPointerDown(e: PointerEvent): void {
    if (!this.sessionId || this.detected) return;
    if (this.countdown.cancel()) {
      this.els.countdownLabel.textContent = "";
    }
    this.drawing = true;
    this.els.canvas.setPointerCapture(e.pointerId);
    this.pushPoint(e.offsetX, e.offsetY);
  }

  private async onPointerMove(e: PointerEvent): Promise<void> {
    if (!this.drawing) return;
    this.pushPoint(e.offsetX, e.offsetY);
    this.redraw();
    if (this.unsent.length >= STROKE_FLUSH_EVERY) {
      await this.flushStroke();
    }
  }

  private onPointerUp(): void {
    if (!this.drawing) return;
    this.drawing = false;
    this.countdown.start();
  }

  private pushPoint(x: number, y: number): void {
    if (this.stroke.add(x, y)) {
      this.unsent.push([x, y]);
    }
  }

  private async flushStroke(): Promise<void> {
    if (!this.sessionId || this.unsent.length === 0) return;
    const batch = this.unsent.splice(0, this.unsent.length);
    try {
      await this.api.appendStroke(this.sessionId, batch.map(([x, y]) => ({ x, y })));
    } catch (err) {
      this.report(err);
    }
  }

  private async finalize(): Promise<void> {
    if (!this.sessionId) return;
    this.els.countdownLabel.textContent = "";
    await this.flushStroke();
    try {
      const summary = await this.api.finalize(this.sessionId);
      this.detected = true;
      const clientArea = this.stroke.area();
      const drift = Math.abs(summary.zone.area_px2 - clientArea);
      this.status(
        `zone closed: ${summary.zone.area_px2.toFixed(1)} px² ` +
          `(client ${clientArea.toFixed(1)}, drift ${drift.toFixed(2)}), ` +
          `${summary.object_count} object(s) in ${summary.detection_ms} ms`,
      );
      await this.refreshMenu();
    } catch (err) {
      this.report(err);
      this.detected = false;
    }
  }

  private async refreshMenu(): Promise<void> {
    if (!this.sessionId) return;
    const entries = await this.api.listObjects(this.sessionId);
    this.els.menuList.replaceChildren(...entries.map((e) => this.menuItem(e)));
    this.els.generateButton.disabled = entries.length === 0;
  }

  private menuItem(entry: MenuEntry): HTMLElement {
    const li = document.createElement("li");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.value = entry.object_id;
    box.className = "pick";
    const img = document.createElement("img");
    img.src = `data:image/png;base64,${entry.thumbnail_png_base64}`;
    img.alt = entry.label;
    const label = document.createElement("span");
    label.textContent = `${entry.label} (${Math.round(entry.confidence * 100)}%)`;
    li.append(box, img, label);
    return li;
  }

  private checkedObjectIds(): string[] {
    return [...this.els.menuList.querySelectorAll<HTMLInputElement>("input.pick:checked")].map(
      (el) => el.value,
    );
  }

  private async onGenerate(): Promise<void> {
    if (!this.sessionId) return;
    const ids = this.checkedObjectIds();
    if (ids.length === 0) {
      this.status("check at least one object first");
      return;
    }
    try {
      const jobIds = await this.api.generate(this.sessionId, ids);
      this.status(`${jobIds.length} generation job(s) queued`);
      for (const jobId of jobIds) {
        const row = document.createElement("li");
        row.textContent = `${jobId}: queued`;
        this.els.jobList.appendChild(row);
        void pollJob(this.api, jobId, {
          intervalMs: 1000,
          onUpdate: (view) => this.renderJobRow(row, view),
        })
          .then((view) => {
            if (view.state === "succeeded") this.attachPreview(row, jobId);
          })
          .catch((err) => this.report(err));
      }
    } catch (err) {
      this.report(err);
    }
  }

  private renderJobRow(row: HTMLElement, view: JobView): void {
    const t = view.timings;
    const bits = [`${view.job_id}: ${view.state}`];
    if (t.conversion_ms != null) bits.push(`convert ${t.conversion_ms} ms`);
    if (t.simplify_ms != null) bits.push(`simplify ${t.simplify_ms} ms`);
    if (view.mesh) bits.push(`${view.mesh.vertices} verts`);
    if (view.error) bits.push(view.error);
    row.textContent = bits.join(" | ");
  }

  private attachPreview(row: HTMLElement, jobId: string): void {
    const btn = document.createElement("button");
    btn.textContent = "preview";
    btn.addEventListener("click", () => void this.preview(jobId));
    row.appendChild(btn);
  }

  private async preview(jobId: string): Promise<void> {
    const started = performance.now();
    try {
      const buf = await this.api.fetchAsset(jobId);
      const mesh = parseGlb(buf);
      this.viewer = new OrbitViewer(mesh, this.els.previewCanvas.width, this.els.previewCanvas.height);
      this.renderPreview();
      const loadRenderMs = performance.now() - started; // download + first frame
      await this.api.postLoadRender(jobId, loadRenderMs);
      this.status(
        `previewing ${mesh.vertexCount} verts / ${mesh.triangleCount} tris, ` +
          `load+render ${loadRenderMs.toFixed(0)} ms`,
      );
      await this.refreshMetrics();
    } catch (err) {
      this.report(err);
    }
  }

  private renderPreview(): void {
    const ctx = this.els.previewCanvas.getContext("2d");
    if (ctx && this.viewer) this.viewer.render(ctx);
  }

  async refreshMetrics(): Promise<void> {
    const report = await this.api.metrics();
    const lines = Object.entries(report)
      .filter(([, v]) => v.count > 0)
      .map(([k, v]) => `${k}: n=${v.count} mean=${v.mean?.toFixed(1)} p95=${v.p95?.toFixed(1)}`);
    this.els.metricsPane.textContent = lines.join("\n") || "no samples yet";
  }

  private redraw(): void {
    const ctx = this.els.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.els.canvas.width, this.els.canvas.height);
    if (this.frameBitmap) ctx.drawImage(this.frameBitmap, 0, 0);
    const pts = this.stroke.points;
    if (pts.length > 1) {
      ctx.strokeStyle = "#e11";
      ctx.lineWidth = 3;
      ctx.beginPath();
      ctx.moveTo(pts[0].x, pts[0].y);
      for (const p of pts.slice(1)) ctx.lineTo(p.x, p.y);
      ctx.stroke();
    }
  }

  private report(err: unknown): void {
    if (err instanceof ApiError) {
      this.status(`error ${err.code}: ${err.message}`);
    } else {
      this.status(`error: ${String(err)}`);
    }
  }
}
