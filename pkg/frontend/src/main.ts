import { ApiClient } from "./api.js";
import { App } from "./app.js";

function grab<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

const app = new App(new ApiClient(""), {
  fileInput: grab<HTMLInputElement>("file"),
  modeSelect: grab<HTMLSelectElement>("mode"),
  canvas: grab<HTMLCanvasElement>("frame"),
  statusLine: grab("status"),
  countdownLabel: grab("countdown"),
  menuList: grab("menu"),
  generateButton: grab<HTMLButtonElement>("generate"),
  jobList: grab("jobs"),
  previewCanvas: grab<HTMLCanvasElement>("preview"),
  metricsPane: grab("metrics"),
});

void app.refreshMetrics();
