/**
 * Session store: all state derives from API responses. The only speculative
 * bit is the optimistic advance after an answer, which is rolled back by
 * re-syncing to the server's pending pair whenever the server disagrees.
 */

import { ApiClient, ApiError, PairView, StatusView, Winner } from "./api";

export interface SessionState {
  sid: string;
  status: StatusView;
  pair: PairView | null;
  /** true while an optimistic advance awaits its next pair */
  advancing: boolean;
  lastError: string | null;
}

export type Listener = (s: SessionState) => void;

export class SessionStore {
  private state: SessionState;
  private listeners: Listener[] = [];

  constructor(
    private api: ApiClient,
    sid: string,
    status: StatusView,
  ) {
    this.state = { sid, status, pair: null, advancing: false, lastError: null };
  }

  /** Resume an existing session purely from server state. */
  static async resume(api: ApiClient, sid: string): Promise<SessionStore> {
    const status = await api.getStatus(sid);
    const store = new SessionStore(api, sid, status);
    await store.refreshPair();
    return store;
  }

  get current(): SessionState {
    return this.state;
  }

  get canFit(): boolean {
    return (
      this.state.status.answers >= this.state.status.min_fit_answers &&
      this.state.status.fit_status !== "fitting"
    );
  }

  get fitHint(): string | null {
    const st = this.state.status;
    if (st.answers < st.min_fit_answers) {
      return `need at least ${st.min_fit_answers} answers (have ${st.answers})`;
    }
    if (st.fit_status === "fitting") return "fit already running";
    return null;
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
  }

  private setState(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  async refreshStatus(): Promise<StatusView> {
    const status = await this.api.getStatus(this.state.sid);
    this.setState({ status });
    return status;
  }

  async refreshPair(): Promise<void> {
    const pair = await this.api.getPair(this.state.sid);
    this.setState({ pair, advancing: false });
  }

  /**
   * Record an answer for the displayed pair. The card advances optimistically
   * (`advancing` hides the stale pair immediately); a conflict means the
   * server had already moved on, so we drop the click and re-sync.
   */
  async answer(winner: Winner): Promise<void> {
    const pair = this.state.pair;
    if (!pair || this.state.advancing) return;
    this.setState({ advancing: true, lastError: null });
    try {
      const res = await this.api.postAnswer(this.state.sid, pair.pair_id, winner);
      this.setState({
        status: { ...this.state.status, answers: res.answers },
      });
    } catch (err) {
      if (!(err instanceof ApiError && err.status === 409)) {
        this.setState({ advancing: false, lastError: String(err) });
        throw err;
      }
      // stale pair: roll back to whatever the server considers pending
    }
    await this.refreshPair();
  }

  async startFit(opts = {}): Promise<void> {
    await this.api.startFit(this.state.sid, opts);
    await this.refreshStatus();
  }
}
