/** Typed client for the elicitation service HTTP+JSON API. */

export interface SessionSpec {
  lower: number[];
  upper: number[];
  labels?: string[];
  units?: string[];
  s?: number;
  rum?: string;
  seed?: number;
}

export interface SessionCreated {
  id: string;
  dim: number;
  labels: string[];
  units: string[];
}

export interface PairView {
  pair_id: number;
  first: number[];
  second: number[];
  labels: string[];
  units: string[];
  answers: number;
}

export interface StatusView {
  answers: number;
  fit_status: "none" | "fitting" | "ready" | "failed";
  fit_error: string | null;
  dim: number;
  labels: string[];
  units: string[];
  lower: number[];
  upper: number[];
  min_fit_answers: number;
}

export interface GridView {
  ax1: number;
  ax2: number;
  labels: string[];
  xs: number[];
  ys: number[];
  log_density: number[][];
  tau: number[][];
}

export interface FitOptions {
  iterations?: number;
  hidden?: number;
  mask_prob?: number;
  preset?: string;
  n_samples?: number;
  seed?: number;
}

export type Winner = "first" | "second";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/**
 * Serializes server mutations: each enqueued task starts only after the
 * previous one settled, so rapid clicks can never reorder answers.
 */
export class RequestQueue {
  private tail: Promise<unknown> = Promise.resolve();

  enqueue<T>(task: () => Promise<T>): Promise<T> {
    const next = this.tail.then(task, task);
    this.tail = next.catch(() => undefined); // an error must not stall the queue
    return next;
  }
}

export class ApiClient {
  readonly queue = new RequestQueue();

  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (...a) => fetch(...a),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "Content-Type": "application/json" } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const data = await resp.json();
        if (data && typeof data.detail === "string") detail = data.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  createSession(spec: SessionSpec): Promise<SessionCreated> {
    return this.queue.enqueue(() => this.request("POST", "/sessions", spec));
  }

  getPair(sid: string): Promise<PairView> {
    return this.request("GET", `/sessions/${sid}/pair`);
  }

  postAnswer(sid: string, pairId: number, winner: Winner): Promise<{ answers: number }> {
    return this.queue.enqueue(() =>
      this.request("POST", `/sessions/${sid}/answer`, { pair_id: pairId, winner }),
    );
  }

  startFit(sid: string, opts: FitOptions = {}): Promise<{ status: string }> {
    return this.queue.enqueue(() => this.request("POST", `/sessions/${sid}/fit`, opts));
  }

  getStatus(sid: string): Promise<StatusView> {
    return this.request("GET", `/sessions/${sid}/status`);
  }

  getSamples(sid: string, n: number): Promise<{ points: number[][] }> {
    return this.request("GET", `/sessions/${sid}/samples?n=${n}`);
  }

  getGrids(sid: string, ax1: number, ax2: number): Promise<GridView> {
    return this.request("GET", `/sessions/${sid}/grids?ax1=${ax1}&ax2=${ax2}`);
  }
}
