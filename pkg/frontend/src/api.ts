// HTTP client for the tracking service; all coordinates in image pixels.

export interface PathSample {
  u: number;
  x: number;
  y: number;
  theta: number;
  kappa: number;
}

export interface TrackResponse {
  grid: { nx: number; ny: number; n_theta: number; h_x: number; h_theta: number };
  beta: number;
  distance: number;
  samples: PathSample[];
  variant: string;
  solve: { accepted: number; wall_time: number };
}

export interface TrackParams {
  source: [number, number];
  target: [number, number];
  theta_source?: number | null;
  theta_target?: number | null;
  beta: number;
  alpha: number;
  prior: boolean;
  n_theta?: number;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function expectOk(r: Response): Promise<Response> {
  if (!r.ok) {
    let detail = r.statusText;
    try {
      const body = await r.json();
      if (body && body.detail) detail = String(body.detail);
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(r.status, detail);
  }
  return r;
}

export class Client {
  constructor(private base: string = "", private fetchFn: typeof fetch = fetch) {}

  demoImageUrl(): string {
    return `${this.base}/demo-image`;
  }

  async uploadImage(blob: Blob, name = "image.png"): Promise<{ session: string; width: number; height: number }> {
    const form = new FormData();
    form.append("file", blob, name);
    const r = await expectOk(await this.fetchFn(`${this.base}/image`, {
      method: "POST",
      body: form,
    }));
    return r.json();
  }

  async buildCost(session: string, alpha: number, nTheta = 72): Promise<void> {
    await expectOk(await this.fetchFn(`${this.base}/session/${session}/cost`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ alpha, n_theta: nTheta }),
    }));
  }

  async track(session: string, params: TrackParams): Promise<TrackResponse> {
    const r = await expectOk(await this.fetchFn(`${this.base}/session/${session}/track`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(params),
    }));
    return r.json();
  }

  overlayUrl(session: string): string {
    return `${this.base}/session/${session}/overlay?t=${Date.now()}`;
  }

  async overlayBytes(session: string): Promise<ArrayBuffer> {
    const r = await expectOk(await this.fetchFn(`${this.base}/session/${session}/overlay`));
    return r.arrayBuffer();
  }
}
