import { describe, expect, it } from "vitest";

import { ApiClient, FetchLike } from "../src/api.js";
import { MemoryStorage, SessionFlow } from "../src/flow.js";

interface FakeTrial {
  trial_id: string;
  instruction_text: string;
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/**
 * Minimal in-memory stand-in for the session endpoints, with knobs for
 * network failures and one-off rejections. Cursors are per session id,
 * mirroring the real service.
 */
class FakeServer {
  readonly trials: FakeTrial[];

  readonly cursors = new Map<string, number>();

  readonly answers: string[] = [];

  /** raw POST /response bodies, for byte-identity checks */
  readonly rawBodies: string[] = [];

  requests = 0;

  created = 0;

  /** fail this many upcoming requests at the transport level */
  failNext = 0;

  /** reject the next response post with a 422 carrying this detail */
  rejectNextWith: string | null = null;

  constructor(trials: FakeTrial[]) {
    this.trials = trials;
  }

  readonly fetch: FetchLike = async (input, init) => {
    this.requests += 1;
    if (this.failNext > 0) {
      this.failNext -= 1;
      throw new TypeError("fetch failed");
    }
    const url = new URL(input);
    const method = init?.method ?? "GET";

    if (url.pathname === "/api/session" && method === "POST") {
      this.created += 1;
      const sid = `s-${this.created}`;
      this.cursors.set(sid, 0);
      return json(200, { session_id: sid, n_trials: this.trials.length });
    }

    const next = url.pathname.match(/^\/api\/session\/([^/]+)\/next$/);
    if (next !== null && method === "GET") {
      const sid = decodeURIComponent(next[1] ?? "");
      const cursor = this.cursors.get(sid);
      if (cursor === undefined) {
        return json(404, { detail: "unknown session" });
      }
      const trial = this.trials[cursor];
      return json(200, {
        trial_id: trial?.trial_id ?? null,
        instruction_text: trial?.instruction_text ?? null,
        done: trial === undefined,
        position: cursor,
        n_trials: this.trials.length,
      });
    }

    const post = url.pathname.match(/^\/api\/session\/([^/]+)\/response$/);
    if (post !== null && method === "POST") {
      const sid = decodeURIComponent(post[1] ?? "");
      const cursor = this.cursors.get(sid);
      if (cursor === undefined) {
        return json(404, { detail: "unknown session" });
      }
      const raw = String(init?.body ?? "");
      this.rawBodies.push(raw);
      const body = JSON.parse(raw) as { trial_id?: string; text?: string };
      const trial = this.trials[cursor];
      if (trial === undefined || body.trial_id !== trial.trial_id) {
        return json(409, { detail: "response out of order" });
      }
      if (typeof body.text !== "string" || body.text.trim() === "") {
        return json(422, { detail: "empty response" });
      }
      if (this.rejectNextWith !== null) {
        const detail = this.rejectNextWith;
        this.rejectNextWith = null;
        return json(422, { detail });
      }
      this.answers.push(body.text);
      this.cursors.set(sid, cursor + 1);
      return json(200, { recorded: true });
    }

    return json(404, { detail: "no route" });
  };
}

const TRIALS: FakeTrial[] = [
  {
    trial_id: "t-1",
    instruction_text: "Delete some words:\n\n  The owl 🦉 saw café́ doors.\n",
  },
  { trial_id: "t-2", instruction_text: "Second sentence here." },
  { trial_id: "t-3", instruction_text: "Third sentence here." },
];

function makeFlow(server: FakeServer, storage = new MemoryStorage()) {
  const client = new ApiClient("http://fake.test", server.fetch);
  return new SessionFlow(client, storage);
}

describe("SessionFlow", () => {
  it("creates a session and shows the first instruction verbatim", async () => {
    const server = new FakeServer(TRIALS);
    const flow = makeFlow(server);
    await flow.start();

    const state = flow.current;
    expect(state.phase).toBe("trial");
    expect(state.trialId).toBe("t-1");
    // exact string the server sent, embedded newlines and all
    expect(state.instructionText).toBe(TRIALS[0]?.instruction_text);
    expect(state.position).toBe(0);
    expect(state.nTrials).toBe(3);
  });

  it("blocks empty submissions locally without any request", async () => {
    const server = new FakeServer(TRIALS);
    const flow = makeFlow(server);
    await flow.start();

    const before = server.requests;
    flow.setDraft("   \n\t ");
    await flow.submit();

    expect(server.requests).toBe(before);
    expect(flow.current.phase).toBe("trial");
    expect(flow.current.notice).not.toBe("");
    expect(flow.current.draft).toBe("   \n\t ");
  });

  it("advances to the next trial and clears the draft on success", async () => {
    const server = new FakeServer(TRIALS);
    const flow = makeFlow(server);
    await flow.start();

    flow.setDraft("the owl saw doors");
    await flow.submit();

    const state = flow.current;
    expect(state.phase).toBe("trial");
    expect(state.trialId).toBe("t-2");
    expect(state.draft).toBe("");
    expect(state.position).toBe(1);
    expect(server.answers).toEqual(["the owl saw doors"]);
  });

  it("round-trips multibyte answers byte-for-byte", async () => {
    const server = new FakeServer(TRIALS);
    const flow = makeFlow(server);
    await flow.start();

    const answer = "café́ 🦉 saw doors\n";
    flow.setDraft(answer);
    await flow.submit();

    expect(server.answers[0]).toBe(answer);
  });

  it("keeps the draft verbatim across a network failure and retries", async () => {
    const server = new FakeServer(TRIALS);
    const flow = makeFlow(server);
    await flow.start();

    const answer = "exact draft 🦉 kept\n";
    flow.setDraft(answer);
    server.failNext = 1;
    await flow.submit();

    expect(flow.current.phase).toBe("network-error");
    expect(flow.current.draft).toBe(answer);
    expect(server.answers).toEqual([]);

    await flow.retry();

    expect(flow.current.phase).toBe("trial");
    expect(flow.current.trialId).toBe("t-2");
    expect(server.answers).toEqual([answer]);
  });

  it("recovers when the very first request cannot reach the server", async () => {
    const server = new FakeServer(TRIALS);
    const flow = makeFlow(server);
    server.failNext = 1;
    await flow.start();

    expect(flow.current.phase).toBe("network-error");

    await flow.retry();

    expect(flow.current.phase).toBe("trial");
    expect(flow.current.trialId).toBe("t-1");
  });

  it("resyncs to the server's current trial after an out-of-order rejection", async () => {
    const server = new FakeServer(TRIALS);
    const storage = new MemoryStorage();
    const flow = makeFlow(server, storage);
    await flow.start();

    // another client on the same session answers first
    const rival = makeFlow(server, storage);
    await rival.start();
    rival.setDraft("rival answer");
    await rival.submit();

    flow.setDraft("now stale");
    await flow.submit();

    const state = flow.current;
    expect(state.phase).toBe("trial");
    expect(state.trialId).toBe("t-2");
    expect(state.draft).toBe(""); // new trial, fresh draft
    expect(server.answers).toEqual(["rival answer"]);
  });

  it("keeps the draft when the server rejects it with a validation error", async () => {
    const server = new FakeServer(TRIALS);
    const flow = makeFlow(server);
    await flow.start();

    flow.setDraft("flagged text");
    server.rejectNextWith = "response could not be recorded";
    await flow.submit();

    const state = flow.current;
    expect(state.phase).toBe("trial");
    expect(state.trialId).toBe("t-1");
    expect(state.draft).toBe("flagged text");
    expect(state.notice).toBe("response could not be recorded");
  });

  it("resumes the stored session at the server's cursor", async () => {
    const server = new FakeServer(TRIALS);
    const storage = new MemoryStorage();

    const first = makeFlow(server, storage);
    await first.start();
    first.setDraft("answer one");
    await first.submit();

    // a reload builds a fresh flow over the same per-tab storage
    const second = makeFlow(server, storage);
    await second.start();

    const state = second.current;
    expect(server.created).toBe(1);
    expect(state.trialId).toBe("t-2");
    expect(state.position).toBe(1);
    expect(state.instructionText).toBe(TRIALS[1]?.instruction_text);
  });

  it("starts fresh when the stored session id is no longer known", async () => {
    const server = new FakeServer(TRIALS);
    const storage = new MemoryStorage();
    storage.set("ghost");

    const flow = makeFlow(server, storage);
    await flow.start();

    const state = flow.current;
    expect(state.phase).toBe("trial");
    expect(state.trialId).toBe("t-1");
    expect(server.created).toBe(1);
    expect(storage.get()).toBe("s-1");
  });

  it("finishes after the last trial and on resume of a finished session", async () => {
    const server = new FakeServer(TRIALS);
    const storage = new MemoryStorage();
    const flow = makeFlow(server, storage);
    await flow.start();

    for (const answer of ["one", "two", "three"]) {
      flow.setDraft(answer);
      await flow.submit();
    }

    expect(flow.current.phase).toBe("finished");
    expect(flow.current.trialId).toBeNull();
    expect(server.answers).toEqual(["one", "two", "three"]);

    const reloaded = makeFlow(server, storage);
    await reloaded.start();
    expect(reloaded.current.phase).toBe("finished");
  });

  it("notifies subscribers with defensive state copies", async () => {
    const server = new FakeServer(TRIALS);
    const flow = makeFlow(server);
    const phases: string[] = [];
    flow.subscribe((state) => {
      phases.push(state.phase);
      state.draft = "mutated"; // must not leak back into the flow
    });

    await flow.start();
    flow.setDraft("real draft");

    expect(phases[0]).toBe("loading");
    expect(phases[phases.length - 1]).toBe("trial");
    expect(flow.current.draft).toBe("real draft");
  });
});
