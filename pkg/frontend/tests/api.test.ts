import { describe, expect, it } from "vitest";

import { ApiClient, FetchLike } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

interface Seen {
  url: string;
  method: string;
  body: string | null;
}

function recordingFetch(
  reply: (seen: Seen) => Response | Error,
): { fetch: FetchLike; calls: Seen[] } {
  const calls: Seen[] = [];
  const fetch: FetchLike = async (input, init) => {
    const seen: Seen = {
      url: input,
      method: init?.method ?? "GET",
      body: typeof init?.body === "string" ? init.body : null,
    };
    calls.push(seen);
    const out = reply(seen);
    if (out instanceof Error) {
      throw out;
    }
    return out;
  };
  return { fetch, calls };
}

describe("ApiClient", () => {
  it("creates a session and returns the parsed payload", async () => {
    const { fetch, calls } = recordingFetch(() =>
      jsonResponse(200, { session_id: "abc", n_trials: 24 }),
    );
    const client = new ApiClient("http://x.test", fetch);
    const result = await client.createSession({ participant: "p1" });

    expect(result).toEqual({ ok: true, value: { session_id: "abc", n_trials: 24 } });
    expect(calls).toHaveLength(1);
    expect(calls[0]?.url).toBe("http://x.test/api/session");
    expect(calls[0]?.method).toBe("POST");
    expect(JSON.parse(calls[0]?.body ?? "")).toEqual({ meta: { participant: "p1" } });
  });

  it("strips a trailing slash from the base url", async () => {
    const { fetch, calls } = recordingFetch(() =>
      jsonResponse(200, { session_id: "s", n_trials: 1 }),
    );
    const client = new ApiClient("http://x.test/", fetch);
    await client.createSession({});

    expect(calls[0]?.url).toBe("http://x.test/api/session");
  });

  it("percent-encodes the session id in paths", async () => {
    const { fetch, calls } = recordingFetch(() =>
      jsonResponse(200, {
        trial_id: null,
        instruction_text: null,
        done: true,
        position: 0,
        n_trials: 0,
      }),
    );
    const client = new ApiClient("http://x.test", fetch);
    await client.nextTrial("a/b c");

    expect(calls[0]?.url).toBe("http://x.test/api/session/a%2Fb%20c/next");
  });

  it("sends the response text byte-for-byte, multibyte included", async () => {
    const { fetch, calls } = recordingFetch(() => jsonResponse(200, { ok: true }));
    const client = new ApiClient("http://x.test", fetch);
    // combining mark, CJK, astral emoji, NBSP, trailing newline
    const text = "café 画 家 🦉 line\n";
    await client.postResponse("sid", "t-3", text);

    const body = JSON.parse(calls[0]?.body ?? "");
    expect(body.trial_id).toBe("t-3");
    expect(body.text).toBe(text);
  });

  it("surfaces the server's detail string on http errors", async () => {
    const { fetch } = recordingFetch(() =>
      jsonResponse(409, { detail: "response out of order" }),
    );
    const client = new ApiClient("http://x.test", fetch);
    const result = await client.postResponse("sid", "t-1", "hello");

    expect(result).toEqual({
      ok: false,
      kind: "http",
      status: 409,
      detail: "response out of order",
    });
  });

  it("falls back to the status text when the error body is not json", async () => {
    const { fetch } = recordingFetch(
      () => new Response("<html>oops</html>", { status: 502, statusText: "Bad Gateway" }),
    );
    const client = new ApiClient("http://x.test", fetch);
    const result = await client.nextTrial("sid");

    expect(result.ok).toBe(false);
    if (!result.ok && result.kind === "http") {
      expect(result.status).toBe(502);
      expect(result.detail).toBe("Bad Gateway");
    }
  });

  it("reports a rejected fetch as a network failure", async () => {
    const { fetch } = recordingFetch(() => new TypeError("fetch failed"));
    const client = new ApiClient("http://x.test", fetch);
    const result = await client.nextTrial("sid");

    expect(result).toEqual({ ok: false, kind: "network", detail: "fetch failed" });
  });
});
