/**
 * Live-server loop: runs only when INTEGRATION_URL points at a capture3d
 * server (e.g. `capture3d serve --port 8400` then
 * `INTEGRATION_URL=http://127.0.0.1:8400 npx vitest run test/integration.test.ts`).
 *
 * Drives the exact client path the page uses: capture, stroke, finalize,
 * menu, generate one object, poll, fetch + parse the asset, post the
 * load-render sample and read it back from the metrics report.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { ApiClient, pollJob } from "../src/api.js";
import { parseGlb } from "../src/glb.js";
import { StrokeBuffer } from "../src/stroke.js";

const baseUrl = process.env.INTEGRATION_URL;
const here = dirname(fileURLToPath(import.meta.url));

describe.skipIf(!baseUrl)("live server loop", () => {
  it("runs the full lasso-to-preview flow", { timeout: 60_000 }, async () => {
    const api = new ApiClient(baseUrl!);
    const png = readFileSync(join(here, "..", "fixtures", "scene.png"));
    const info = await api.createCapture(png.toString("base64"), "zone");
    expect(info.state).toBe("open");

    // trace the same circular lasso the page would stream
    const stroke = new StrokeBuffer();
    for (let k = 0; k < 96; k++) {
      const a = (2 * Math.PI * k) / 96;
      stroke.add(260 + 190 * Math.cos(a), 200 + 190 * Math.sin(a));
    }
    await api.appendStroke(info.session_id, stroke.points);
    const summary = await api.finalize(info.session_id);
    expect(summary.state).toBe("detected");
    // server-side polygon area matches the client geometry within 1 px^2
    expect(Math.abs(summary.zone.area_px2 - stroke.area())).toBeLessThanOrEqual(1.0);

    const menu = await api.listObjects(info.session_id);
    expect(menu.map((m) => m.label).sort()).toEqual(["blue", "green"]);

    const jobIds = await api.generate(info.session_id, [menu[0].object_id], "stub");
    expect(jobIds).toHaveLength(1);
    const view = await pollJob(api, jobIds[0], { intervalMs: 250 });
    expect(view.state).toBe("succeeded");

    const before = (await api.metrics()).load_render_ms?.count ?? 0;
    const started = performance.now();
    const asset = await api.fetchAsset(jobIds[0]);
    const mesh = parseGlb(asset);
    const loadRenderMs = performance.now() - started;
    expect(mesh.vertexCount).toBeGreaterThan(0);
    expect(mesh.triangleCount).toBeGreaterThan(0);
    await api.postLoadRender(jobIds[0], loadRenderMs);
    const after = await api.metrics();
    expect(after.load_render_ms.count).toBe(before + 1);
  });
});
