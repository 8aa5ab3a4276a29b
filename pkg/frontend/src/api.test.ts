import { describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "./api.js";

function fakeFetch(routes: Record<string, { status: number; body: unknown }>) {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const impl = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    const route = routes[url];
    if (!route) {
      return new Response(JSON.stringify({ detail: "unknown session" }), { status: 404 });
    }
    return new Response(JSON.stringify(route.body), { status: route.status });
  };
  return { impl, calls };
}

describe("ApiClient", () => {
  it("creates sessions and posts segments with the right payload", async () => {
    const { impl, calls } = fakeFetch({
      "/api/session": { status: 200, body: { session_id: "abc" } },
      "/api/session/abc/segment": {
        status: 200,
        body: { plan: [], executed: [[0, 0]], actions: [], success: true, distance: 0.1, completed: true },
      },
    });
    const api = new ApiClient("", impl);
    const sid = await api.createSession();
    expect(sid).toBe("abc");
    const res = await api.runSegment(sid, "a person walks forward", [2, 0], 7);
    expect(res.success).toBe(true);
    const body = JSON.parse(String(calls[1].init?.body));
    expect(body).toEqual({ instruction: "a person walks forward", waypoint: [2, 0], seed: 7 });
  });

  it("maps http errors to ApiError with the server detail", async () => {
    const { impl } = fakeFetch({});
    const api = new ApiClient("", impl);
    await expect(api.runSegment("nope", "walk", null)).rejects.toMatchObject({
      status: 404,
      message: "unknown session",
    });
  });

  it("wraps network failures as status 0", async () => {
    const api = new ApiClient("", async () => {
      throw new Error("refused");
    });
    const err = await api.meta().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(0);
  });
});
