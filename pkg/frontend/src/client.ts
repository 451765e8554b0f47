// Thin client over the access point's two endpoints. The fetch function is
// injected so tests can fake the server.

import type { ReceivedSnapshot, SubmitResult } from "./types.js";

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApnClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = fetch as unknown as FetchLike,
  ) {}

  async submit(url: string): Promise<SubmitResult> {
    let resp;
    try {
      resp = await this.fetchFn(`${this.baseUrl}/submit`, {
        method: "POST",
        headers: { "Content-Type": "application/x-www-form-urlencoded" },
        body: `url=${encodeURIComponent(url)}`,
      });
    } catch (err) {
      return { kind: "network-error", message: String(err) };
    }
    const doc = (await resp.json()) as { request_id?: number; error?: string };
    if (!resp.ok) {
      return {
        kind: "rejected",
        status: resp.status,
        message: doc.error ?? `HTTP ${resp.status}`,
      };
    }
    return { kind: "ok", requestId: doc.request_id! };
  }

  async received(): Promise<ReceivedSnapshot> {
    const resp = await this.fetchFn(`${this.baseUrl}/received`);
    if (!resp.ok) {
      throw new Error(`/received returned HTTP ${resp.status}`);
    }
    return (await resp.json()) as ReceivedSnapshot;
  }
}

// Distinct inline messages for the three submission rejections.
export function rejectionMessage(status: number, serverMessage: string): string {
  switch (status) {
    case 400:
      return "That does not look like an http(s) URL.";
    case 409:
      return "A transfer is already in progress; wait for it to finish.";
    case 414:
      return "URL too long for a single request frame (250 bytes max).";
    default:
      return serverMessage;
  }
}
