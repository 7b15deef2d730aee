import { StudioApi } from "./api.js";
import { Label, StrokeLayer } from "./stroke-layer.js";
import { StudioController } from "./studio.js";

const STROKE_COLORS: Record<Label, string> = {
  [Label.Unset]: "rgba(0,0,0,0)",
  [Label.Fg]: "rgba(64,200,64,0.55)",
  [Label.Bg]: "rgba(220,64,64,0.55)",
  [Label.Unknown]: "rgba(240,220,40,0.55)",
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function paintStrokes(canvas: HTMLCanvasElement, layer: StrokeLayer): void {
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const snap = layer.snapshot();
  const image = ctx.createImageData(layer.width, layer.height);
  for (let i = 0; i < snap.length; i++) {
    if (snap[i] === Label.Unset) continue;
    const color = STROKE_COLORS[snap[i] as Label]
      .match(/\d+(\.\d+)?/g)!.map(Number);
    image.data[i * 4] = color[0];
    image.data[i * 4 + 1] = color[1];
    image.data[i * 4 + 2] = color[2];
    image.data[i * 4 + 3] = Math.round(color[3] * 255);
  }
  ctx.putImageData(image, 0, 0);
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const api = new StudioApi(params.get("api") ?? "http://127.0.0.1:8787");

  const imageCanvas = el<HTMLCanvasElement>("image");
  const strokeCanvas = el<HTMLCanvasElement>("strokes");
  const previewCanvas = el<HTMLCanvasElement>("preview");
  const banner = el<HTMLDivElement>("banner");
  const brushName = el<HTMLSpanElement>("brush");

  const controller = new StudioController(api, {
    showPreview(rgba, width, height) {
      previewCanvas.width = width;
      previewCanvas.height = height;
      const ctx = previewCanvas.getContext("2d")!;
      ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba),
                                     width, height), 0, 0);
      banner.textContent = "";
    },
    showError(message) {
      banner.textContent = message;
    },
    setBusy(busy) {
      el<HTMLButtonElement>("matte").disabled = busy;
    },
  });

  el<HTMLInputElement>("file").addEventListener("change", async (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const png = new Uint8Array(await file.arrayBuffer());
    try {
      const session = await controller.open(png);
      for (const canvas of [imageCanvas, strokeCanvas]) {
        canvas.width = session.width;
        canvas.height = session.height;
      }
      const bitmap = await createImageBitmap(new Blob([new Uint8Array(png)]));
      imageCanvas.getContext("2d")!.drawImage(bitmap, 0, 0);
    } catch (err) {
      banner.textContent = err instanceof Error ? err.message : String(err);
    }
  });

  let drawing = false;
  let last: [number, number] | null = null;
  strokeCanvas.addEventListener("pointerdown", (event) => {
    if (!controller.strokes) return;
    drawing = true;
    controller.strokes.beginStroke();
    const rect = strokeCanvas.getBoundingClientRect();
    last = [event.clientX - rect.left, event.clientY - rect.top];
    controller.strokes.paint(last[0], last[1]);
    paintStrokes(strokeCanvas, controller.strokes);
  });
  strokeCanvas.addEventListener("pointermove", (event) => {
    if (!drawing || !controller.strokes || !last) return;
    const rect = strokeCanvas.getBoundingClientRect();
    const next: [number, number] = [event.clientX - rect.left,
                                    event.clientY - rect.top];
    controller.strokes.line(last[0], last[1], next[0], next[1]);
    last = next;
    paintStrokes(strokeCanvas, controller.strokes);
  });
  window.addEventListener("pointerup", () => {
    drawing = false;
    last = null;
  });

  window.addEventListener("keydown", (event) => {
    if (!controller.strokes) return;
    if (event.key === "b") {
      brushName.textContent = Label[controller.strokes.cycleBrush()];
    } else if (event.key.toLowerCase() === "z" && (event.ctrlKey || event.metaKey)) {
      if (event.shiftKey) controller.strokes.redo();
      else controller.strokes.undo();
      paintStrokes(strokeCanvas, controller.strokes);
    }
  });

  el<HTMLButtonElement>("matte").addEventListener("click", () => {
    void controller.requestMatte();
  });
  el<HTMLInputElement>("grid").addEventListener("change", (event) => {
    const grid = (event.target as HTMLInputElement).checked;
    void controller.setStrategy(grid ? "grid" : "normal");
  });
  el<HTMLInputElement>("background").addEventListener("change", async (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (!file) return;
    try {
      const blend = await controller.compositeOnto(
        new Uint8Array(await file.arrayBuffer()));
      const bitmap = await createImageBitmap(new Blob([new Uint8Array(blend)]));
      previewCanvas.getContext("2d")!.drawImage(bitmap, 0, 0);
    } catch (err) {
      banner.textContent = err instanceof Error ? err.message : String(err);
    }
  });
}

void boot();
