import { Meta, SegmentResponse } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly base = "",
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.base + path, init);
    } catch (err) {
      throw new ApiError(0, `server unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") {
          detail = body.detail;
        }
      } catch {
        // keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  meta(): Promise<Meta> {
    return this.request<Meta>("/api/meta");
  }

  async createSession(): Promise<string> {
    const body = await this.request<{ session_id: string }>("/api/session", {
      method: "POST",
    });
    return body.session_id;
  }

  runSegment(
    sessionId: string,
    instruction: string,
    waypoint: [number, number] | null,
    seed?: number,
  ): Promise<SegmentResponse> {
    return this.request<SegmentResponse>(`/api/session/${sessionId}/segment`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ instruction, waypoint, seed: seed ?? null }),
    });
  }

  deleteSession(sessionId: string): Promise<{ deleted: string }> {
    return this.request(`/api/session/${sessionId}`, { method: "DELETE" });
  }
}
