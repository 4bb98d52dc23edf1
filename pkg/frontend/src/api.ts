/** Typed client for the render service. GET-only by construction. */

export interface Meta {
  tau: number;
  delta: number;
  image_size: [number, number];
  locations: number[];
  reference_yaws: number[];
  step_deg: number;
}

export type FrameKind = "prediction" | "reference" | "ground-truth" | "residue";

export interface Frame {
  blob: Blob;
  snappedYaw: number;
  kind: FrameKind;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function getOk(url: string, signal?: AbortSignal): Promise<Response> {
  const resp = await fetch(url, { signal });
  if (!resp.ok) {
    let detail = `HTTP ${resp.status}`;
    try {
      const body = (await resp.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return resp;
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string, loc: number, yaw: number): string {
    return `${this.baseUrl}${path}?loc=${loc}&yaw=${yaw}`;
  }

  async fetchMeta(signal?: AbortSignal): Promise<Meta> {
    const resp = await getOk(`${this.baseUrl}/meta`, signal);
    return (await resp.json()) as Meta;
  }

  /**
   * Fetch the interpolated view. When the yaw snaps onto a reference the
   * service answers 422; we fall back to the captured view at that yaw and
   * label the frame as a reference.
   */
  async fetchPrediction(loc: number, yaw: number, signal?: AbortSignal): Promise<Frame> {
    try {
      const resp = await getOk(this.url("/render", loc, yaw), signal);
      const snapped = parseFloat(resp.headers.get("X-Snapped-Yaw") ?? `${yaw}`);
      return { blob: await resp.blob(), snappedYaw: snapped, kind: "prediction" };
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        const gt = await getOk(this.url("/gt", loc, yaw), signal);
        return { blob: await gt.blob(), snappedYaw: yaw, kind: "reference" };
      }
      throw err;
    }
  }

  async fetchGroundTruth(loc: number, yaw: number, signal?: AbortSignal): Promise<Frame> {
    const resp = await getOk(this.url("/gt", loc, yaw), signal);
    return { blob: await resp.blob(), snappedYaw: yaw, kind: "ground-truth" };
  }

  async fetchResidue(loc: number, yaw: number, signal?: AbortSignal): Promise<Frame> {
    const resp = await getOk(this.url("/residue", loc, yaw), signal);
    const snapped = parseFloat(resp.headers.get("X-Snapped-Yaw") ?? `${yaw}`);
    return { blob: await resp.blob(), snappedYaw: snapped, kind: "residue" };
  }
}
