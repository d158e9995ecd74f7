/**
 * Session flow state machine, kept free of DOM concerns.
 *
 * The server owns all ordering: this class only mirrors the current trial
 * and never holds more than one. The response draft is optimistic local
 * state; it survives network failures (retry resubmits it) and is reset
 * whenever the server moves to a different trial.
 */

import { ApiClient, ApiResult } from "./api.js";

export type Phase =
  | "idle"
  | "loading"
  | "trial"
  | "submitting"
  | "network-error"
  | "finished"
  | "fatal";

export interface FlowState {
  phase: Phase;
  sessionId: string | null;
  trialId: string | null;
  /** shown verbatim; the server composes the full instruction */
  instructionText: string;
  draft: string;
  position: number;
  nTrials: number;
  /** user-facing validation or error message, empty when all is well */
  notice: string;
}

export interface IdStorage {
  get(): string | null;
  set(id: string): void;
  clear(): void;
}

/** in-memory fallback, also used by tests */
export class MemoryStorage implements IdStorage {
  private id: string | null = null;

  get(): string | null {
    return this.id;
  }

  set(id: string): void {
    this.id = id;
  }

  clear(): void {
    this.id = null;
  }
}

type RetryAction = "start" | "sync" | "submit";

const RETRY_NOTICE =
  "Could not reach the server. Your answer is kept; press retry.";

export class SessionFlow {
  private readonly client: ApiClient;

  private readonly storage: IdStorage;

  private readonly listeners: Array<(state: FlowState) => void> = [];

  private retryAction: RetryAction | null = null;

  private state: FlowState = {
    phase: "idle",
    sessionId: null,
    trialId: null,
    instructionText: "",
    draft: "",
    position: 0,
    nTrials: 0,
    notice: "",
  };

  constructor(client: ApiClient, storage: IdStorage = new MemoryStorage()) {
    this.client = client;
    this.storage = storage;
  }

  get current(): FlowState {
    return { ...this.state };
  }

  subscribe(listener: (state: FlowState) => void): void {
    this.listeners.push(listener);
  }

  private update(patch: Partial<FlowState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.current);
    }
  }

  private networkFailure(action: RetryAction, detail: string): void {
    this.retryAction = action;
    this.update({ phase: "network-error", notice: `${RETRY_NOTICE} (${detail})` });
  }

  /** Resume the stored session if the server still knows it, else create. */
  async start(): Promise<void> {
    this.update({ phase: "loading", notice: "" });
    const stored = this.storage.get();
    if (stored !== null) {
      this.update({ sessionId: stored });
      const probe = await this.client.nextTrial(stored);
      if (probe.ok) {
        this.adopt(probe.value);
        return;
      }
      if (probe.kind === "network") {
        this.networkFailure("start", probe.detail);
        return;
      }
      // the stored session is gone (e.g. 404 after a server reset)
      this.storage.clear();
      this.update({ sessionId: null });
    }
    const created = await this.client.createSession({});
    if (!created.ok) {
      if (created.kind === "network") {
        this.networkFailure("start", created.detail);
      } else {
        this.update({ phase: "fatal", notice: created.detail });
      }
      return;
    }
    this.storage.set(created.value.session_id);
    this.update({
      sessionId: created.value.session_id,
      nTrials: created.value.n_trials,
    });
    await this.sync();
  }

  /** Pull the server's current trial; the cursor there is authoritative. */
  async sync(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (sessionId === null) {
      await this.start();
      return;
    }
    const next = await this.client.nextTrial(sessionId);
    if (!next.ok) {
      if (next.kind === "network") {
        this.networkFailure("sync", next.detail);
      } else {
        this.update({ phase: "fatal", notice: next.detail });
      }
      return;
    }
    this.adopt(next.value);
  }

  private adopt(payload: {
    trial_id: string | null;
    instruction_text: string | null;
    done: boolean;
    position: number;
    n_trials: number;
  }): void {
    if (payload.done) {
      this.update({
        phase: "finished",
        trialId: null,
        instructionText: "",
        draft: "",
        position: payload.position,
        nTrials: payload.n_trials,
        notice: "",
      });
      return;
    }
    const sameTrial = payload.trial_id === this.state.trialId;
    this.update({
      phase: "trial",
      trialId: payload.trial_id,
      instructionText: payload.instruction_text ?? "",
      draft: sameTrial ? this.state.draft : "",
      position: payload.position,
      nTrials: payload.n_trials,
      notice: "",
    });
  }

  setDraft(text: string): void {
    this.update({ draft: text });
  }

  async submit(): Promise<void> {
    if (this.state.phase !== "trial" && this.state.phase !== "network-error") {
      return;
    }
    const { sessionId, trialId, draft } = this.state;
    if (sessionId === null || trialId === null) {
      return;
    }
    if (draft.trim() === "") {
      // back to plain trial state so a stale retry action can't strand us
      this.update({ phase: "trial", notice: "Type your answer before submitting." });
      return;
    }
    this.update({ phase: "submitting", notice: "" });
    const posted = await this.client.postResponse(sessionId, trialId, draft);
    if (posted.ok) {
      this.update({ draft: "" });
      await this.sync();
      return;
    }
    if (posted.kind === "network") {
      this.networkFailure("submit", posted.detail);
      return;
    }
    if (posted.status === 409) {
      // stale trial: fall back to whatever the server says is current
      this.update({ phase: "loading", notice: "" });
      await this.sync();
      return;
    }
    if (posted.status === 422) {
      this.update({ phase: "trial", notice: posted.detail });
      return;
    }
    this.update({ phase: "fatal", notice: posted.detail });
  }

  /** Re-run whichever call the network failure interrupted. */
  async retry(): Promise<void> {
    if (this.state.phase !== "network-error" || this.retryAction === null) {
      return;
    }
    const action = this.retryAction;
    this.retryAction = null;
    if (action === "submit") {
      await this.submit();
    } else if (action === "sync") {
      this.update({ phase: "loading", notice: "" });
      await this.sync();
    } else {
      await this.start();
    }
  }
}
