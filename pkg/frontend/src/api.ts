/** REST client for the matting service. Base URL is configurable. */

export interface SessionInfo {
  sessionId: string;
  width: number;
  height: number;
}

export interface MatteResponse {
  alphaPng: Uint8Array;
  elapsedMs: number;
  strategy: string;
}

export type Strategy = "normal" | "grid";

export class ApiError extends Error {
  constructor(readonly status: number, readonly code: string, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class StudioApi {
  private readonly fetchFn: FetchLike;

  constructor(readonly baseUrl: string, fetchFn?: FetchLike) {
    // bind so a bare window.fetch keeps its receiver
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  async healthz(): Promise<boolean> {
    const resp = await this.fetchFn(this.url("/healthz"));
    return resp.ok;
  }

  async createSession(imagePng: Uint8Array): Promise<SessionInfo> {
    const resp = await this.fetchFn(this.url("/sessions"), {
      method: "POST",
      headers: { "content-type": "image/png" },
      body: new Uint8Array(imagePng),
    });
    if (resp.status !== 201) return this.fail(resp);
    const body = await resp.json();
    return { sessionId: body.session_id, width: body.width, height: body.height };
  }

  async matte(sessionId: string, trimapPng: Uint8Array,
              strategy: Strategy = "normal"): Promise<MatteResponse> {
    const resp = await this.fetchFn(
      this.url(`/sessions/${sessionId}/matte?strategy=${strategy}`), {
        method: "POST",
        headers: { "content-type": "image/png" },
        body: new Uint8Array(trimapPng),
      });
    if (!resp.ok) return this.fail(resp);
    return {
      alphaPng: new Uint8Array(await resp.arrayBuffer()),
      elapsedMs: Number(resp.headers.get("x-elapsed-ms") ?? "0"),
      strategy: resp.headers.get("x-strategy") ?? strategy,
    };
  }

  async composite(sessionId: string, backgroundPng: Uint8Array): Promise<Uint8Array> {
    const resp = await this.fetchFn(
      this.url(`/sessions/${sessionId}/composite`), {
        method: "POST",
        headers: { "content-type": "image/png" },
        body: new Uint8Array(backgroundPng),
      });
    if (!resp.ok) return this.fail(resp);
    return new Uint8Array(await resp.arrayBuffer());
  }

  private url(path: string): string {
    return this.baseUrl.replace(/\/+$/, "") + path;
  }

  private async fail(resp: Response): Promise<never> {
    let code = `http_${resp.status}`;
    let message = resp.statusText || code;
    try {
      const body = await resp.json();
      if (body.code) code = body.code;
      if (body.message) message = body.message;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, code, message);
  }
}
