// Session view state: click placement, drag-to-orient, zoom/pan transforms.
// Pure logic so it runs headless under tests; rendering consumes the state.

import type { PathSample, TrackResponse } from "./api.js";

export interface Marker {
  x: number;          // image pixel coordinates
  y: number;
  theta: number | null;  // set by dragging an arrow, null = server estimates
}

export interface ViewTransform {
  scale: number;      // canvas px per image px
  offsetX: number;    // canvas position of image pixel (0, 0)
  offsetY: number;
}

export interface StoredPath {
  variant: string;
  points: Array<[number, number]>;
  distance: number;
}

export const DRAG_DEAD_ZONE = 5;      // canvas px: shorter drags are clicks
export const REPOSITION_RADIUS = 8;   // image px: clicking near a marker moves it

export class SessionView {
  session: string | null = null;
  width = 0;
  height = 0;
  markers: Marker[] = [];
  paths: StoredPath[] = [];
  busy = false;
  pendingRerun = false;
  error: string | null = null;
  transform: ViewTransform = { scale: 1, offsetX: 0, offsetY: 0 };

  reset(session: string, width: number, height: number): void {
    this.session = session;
    this.width = width;
    this.height = height;
    this.markers = [];
    this.paths = [];
    this.error = null;
  }

  canvasToImage(cx: number, cy: number): [number, number] {
    const t = this.transform;
    return [(cx - t.offsetX) / t.scale, (cy - t.offsetY) / t.scale];
  }

  imageToCanvas(ix: number, iy: number): [number, number] {
    const t = this.transform;
    return [ix * t.scale + t.offsetX, iy * t.scale + t.offsetY];
  }

  inImage(ix: number, iy: number): boolean {
    return ix >= 0 && iy >= 0 && ix <= this.width - 1 && iy <= this.height - 1;
  }

  get canTrack(): boolean {
    return this.session !== null && this.markers.length === 2 && !this.busy;
  }

  /** A press+release on the canvas: place, reposition or orient a marker.
   *  Returns true when the view changed. */
  placePoint(downCanvas: [number, number], upCanvas: [number, number]): boolean {
    const [ix, iy] = this.canvasToImage(downCanvas[0], downCanvas[1]);
    if (!this.inImage(ix, iy)) {
      this.error = "click inside the image";
      return false;
    }
    this.error = null;
    const dragCanvas = Math.hypot(upCanvas[0] - downCanvas[0], upCanvas[1] - downCanvas[1]);
    let theta: number | null = null;
    if (dragCanvas >= DRAG_DEAD_ZONE) {
      const [ux, uy] = this.canvasToImage(upCanvas[0], upCanvas[1]);
      theta = Math.atan2(uy - iy, ux - ix);
    }
    // clicking near an existing marker repositions it
    for (const m of this.markers) {
      if (Math.hypot(m.x - ix, m.y - iy) <= REPOSITION_RADIUS) {
        m.x = ix;
        m.y = iy;
        if (theta !== null) m.theta = theta;
        return true;
      }
    }
    if (this.markers.length >= 2) {
      this.error = "two points placed; click a marker to move it";
      return false;
    }
    this.markers.push({ x: ix, y: iy, theta });
    return true;
  }

  trackRequest(beta: number, alpha: number, prior: boolean, nTheta = 72) {
    if (this.markers.length !== 2) {
      throw new Error("need exactly two placed points");
    }
    const [s, t] = this.markers;
    return {
      source: [s.x, s.y] as [number, number],
      target: [t.x, t.y] as [number, number],
      theta_source: s.theta,
      theta_target: t.theta,
      beta,
      alpha,
      prior,
      n_theta: nTheta,
    };
  }

  storePath(resp: TrackResponse): StoredPath {
    const stored: StoredPath = {
      variant: resp.variant,
      points: resp.samples.map((s: PathSample) => [s.x, s.y]),
      distance: resp.distance,
    };
    // keep at most one path per variant so the prior toggle shows a pair
    this.paths = this.paths.filter((p) => p.variant !== stored.variant);
    this.paths.push(stored);
    return stored;
  }

  get lastPath(): StoredPath | null {
    return this.paths.length ? this.paths[this.paths.length - 1] : null;
  }

  setZoom(scale: number, anchorCanvas: [number, number]): void {
    const [ix, iy] = this.canvasToImage(anchorCanvas[0], anchorCanvas[1]);
    this.transform.scale = scale;
    this.transform.offsetX = anchorCanvas[0] - ix * scale;
    this.transform.offsetY = anchorCanvas[1] - iy * scale;
  }
}
