import { encodePng } from "./png.js";

/** Brush labels. Unset pixels export as unknown. */
export enum Label {
  Unset = 0,
  Fg = 1,
  Bg = 2,
  Unknown = 3,
}

const BRUSH_CYCLE = [Label.Fg, Label.Bg, Label.Unknown];

const TRIMAP_BYTE: Record<Label, number> = {
  [Label.Unset]: 128,
  [Label.Unknown]: 128,
  [Label.Bg]: 0,
  [Label.Fg]: 255,
};

const MAX_HISTORY = 64;

/**
 * Canvas-sized label buffer with stroke-granular undo/redo.
 *
 * Callers mark a new stroke with beginStroke(), then paint()/line() any
 * number of stamps. undo() restores the exact pre-stroke bytes.
 */
export class StrokeLayer {
  brushRadius = 8;
  activeLabel: Label = Label.Fg;

  private labels: Uint8Array;
  private undoStack: Uint8Array[] = [];
  private redoStack: Uint8Array[] = [];

  constructor(readonly width: number, readonly height: number) {
    if (width <= 0 || height <= 0) {
      throw new Error(`bad layer dims ${width}x${height}`);
    }
    this.labels = new Uint8Array(width * height);
  }

  beginStroke(): void {
    this.undoStack.push(this.labels.slice());
    if (this.undoStack.length > MAX_HISTORY) this.undoStack.shift();
    this.redoStack.length = 0;
  }

  paint(x: number, y: number): void {
    this.stamp(Math.round(x), Math.round(y));
  }

  /** Stamps along the segment so fast pointer moves leave no gaps. */
  line(x0: number, y0: number, x1: number, y1: number): void {
    const steps = Math.max(Math.abs(x1 - x0), Math.abs(y1 - y0), 1);
    for (let i = 0; i <= steps; i++) {
      this.stamp(Math.round(x0 + ((x1 - x0) * i) / steps),
                 Math.round(y0 + ((y1 - y0) * i) / steps));
    }
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.redoStack.push(this.labels);
    this.labels = prev;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(this.labels);
    this.labels = next;
    return true;
  }

  cycleBrush(): Label {
    const i = BRUSH_CYCLE.indexOf(this.activeLabel);
    this.activeLabel = BRUSH_CYCLE[(i + 1) % BRUSH_CYCLE.length];
    return this.activeLabel;
  }

  labelAt(x: number, y: number): Label {
    return this.labels[y * this.width + x] as Label;
  }

  /** Byte copy of the label buffer, for equality checks and rendering. */
  snapshot(): Uint8Array {
    return this.labels.slice();
  }

  /** Gray levels: fg 255, bg 0, unknown and untouched 128. */
  exportTrimap(): Uint8Array {
    const out = new Uint8Array(this.labels.length);
    for (let i = 0; i < this.labels.length; i++) {
      out[i] = TRIMAP_BYTE[this.labels[i] as Label];
    }
    return out;
  }

  exportTrimapPng(): Uint8Array {
    return encodePng(this.exportTrimap(), this.width, this.height, 1);
  }

  private stamp(cx: number, cy: number): void {
    const r = this.brushRadius;
    const r2 = r * r;
    const x0 = Math.max(0, cx - r);
    const x1 = Math.min(this.width - 1, cx + r);
    const y0 = Math.max(0, cy - r);
    const y1 = Math.min(this.height - 1, cy + r);
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r2) {
          this.labels[y * this.width + x] = this.activeLabel;
        }
      }
    }
  }
}
