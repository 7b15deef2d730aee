import { StudioApi, SessionInfo, Strategy } from "./api.js";
import { decodePng, encodePng } from "./png.js";
import { checkerboardPreview, toRgb } from "./preview.js";
import { StrokeLayer } from "./stroke-layer.js";

/** What the controller needs from the page; tests pass a recorder. */
export interface StudioView {
  showPreview(rgba: Uint8Array, width: number, height: number): void;
  showError(message: string): void;
  setBusy(busy: boolean): void;
}

/**
 * Session state machine between the canvas and the service.
 *
 * At most one matte request is in flight; extra requests while busy
 * coalesce into a single trailing refresh, so scrubbing the brush and
 * mashing the button cannot stampede the model.
 */
export class StudioController {
  strategy: Strategy = "normal";
  strokes: StrokeLayer | null = null;
  session: SessionInfo | null = null;
  lastAlpha: Uint8Array | null = null;

  private imageRgb: Uint8Array | null = null;
  private inFlight = false;
  private queued = false;

  constructor(private readonly api: StudioApi,
              private readonly view: StudioView) {}

  async open(imagePng: Uint8Array): Promise<SessionInfo> {
    const decoded = await decodePng(imagePng);
    const session = await this.api.createSession(imagePng);
    this.imageRgb = toRgb(decoded);
    this.session = session;
    this.strokes = new StrokeLayer(session.width, session.height);
    this.lastAlpha = null;
    return session;
  }

  async requestMatte(): Promise<void> {
    if (!this.session || !this.strokes) {
      this.view.showError("open an image first");
      return;
    }
    if (this.inFlight) {
      this.queued = true;
      return;
    }
    this.inFlight = true;
    this.view.setBusy(true);
    try {
      const trimapPng = encodePng(this.strokes.exportTrimap(),
                                  this.session.width, this.session.height, 1);
      const result = await this.api.matte(this.session.sessionId, trimapPng,
                                          this.strategy);
      const alpha = await decodePng(result.alphaPng);
      this.lastAlpha = alpha.pixels;
      this.view.showPreview(
        checkerboardPreview(this.imageRgb!, alpha.pixels,
                            this.session.width, this.session.height),
        this.session.width, this.session.height);
    } catch (err) {
      this.view.showError(err instanceof Error ? err.message : String(err));
    } finally {
      this.inFlight = false;
      this.view.setBusy(false);
      if (this.queued) {
        this.queued = false;
        // fire-and-forget: errors already route through the view
        void this.requestMatte();
      }
    }
  }

  /** Switching the flag re-runs the last matte under the new mode. */
  async setStrategy(strategy: Strategy): Promise<void> {
    if (strategy === this.strategy) return;
    this.strategy = strategy;
    if (this.lastAlpha) await this.requestMatte();
  }

  async compositeOnto(backgroundPng: Uint8Array): Promise<Uint8Array> {
    if (!this.session) throw new Error("no open session");
    return this.api.composite(this.session.sessionId, backgroundPng);
  }
}
