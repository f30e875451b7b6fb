/** Thin client for the episode service's HTTP + WebSocket surface. */

import type { EpisodeSnapshot } from "./session.js";

export interface InterventionResult {
  ok: boolean;
  status: number;
  detail?: string;
}

export interface WsLike {
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
  close(): void;
}

export type WsFactory = (url: string) => WsLike;
export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;
  private readonly wsFactory: WsFactory;

  constructor(baseUrl = "", fetchImpl?: FetchLike, wsFactory?: WsFactory) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
    this.wsFactory = wsFactory ?? ((url) => new WebSocket(url) as unknown as WsLike);
  }

  private http(path: string): string {
    return `${this.base}${path}`;
  }

  async getEpisode(episodeId: string): Promise<EpisodeSnapshot> {
    const response = await this.fetchImpl(this.http(`/episodes/${episodeId}`));
    if (!response.ok) {
      throw new Error(`episode fetch failed: ${response.status}`);
    }
    return (await response.json()) as EpisodeSnapshot;
  }

  async intervene(
    episodeId: string,
    requestId: string,
    actionLine: string,
  ): Promise<InterventionResult> {
    const response = await this.fetchImpl(this.http(`/episodes/${episodeId}/intervene`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ request_id: requestId, action: actionLine }),
    });
    if (response.status === 204) {
      return { ok: true, status: 204 };
    }
    let detail = "";
    try {
      detail = String(((await response.json()) as { detail?: string }).detail ?? "");
    } catch {
      // body may be empty; the status code is enough
    }
    return { ok: false, status: response.status, detail };
  }

  screenshotUrl(episodeId: string, shotId: string): string {
    return this.http(`/episodes/${episodeId}/screenshots/${shotId}`);
  }

  openEvents(episodeId: string, fromSeq: number): WsLike {
    const origin = this.base || `${location.protocol}//${location.host}`;
    const wsOrigin = origin.replace(/^http/, "ws");
    return this.wsFactory(`${wsOrigin}/episodes/${episodeId}/events?from=${fromSeq}`);
  }
}
