/**
 * Thin typed client for the guidance service REST + push API.
 *
 * The transport (`fetch`) is injected so tests can drive the app against
 * recorded traffic; nothing here transforms the numbers the service sends.
 */

import type {
  ApiErrorBody,
  BoardDict,
  CaptureSummary,
  CreateResponse,
  EventsResponse,
  PoseDict,
  RigDict,
  SearchConfigDict,
  SessionSnapshot,
  SuggestResponse,
} from "./types";

/** A failed request, carrying the service's stable error code. */
export class ServiceError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(code: string, message: string, status: number) {
    super(message);
    this.name = "ServiceError";
    this.code = code;
    this.status = status;
  }
}

/** Subset of `fetch` the client needs; injectable for tests. */
export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Options for creating a session; mirrors the POST /sessions body. */
export interface CreateSessionRequest {
  rig: RigDict;
  board: BoardDict;
  mode?: "guided" | "freestyle";
  seed?: number;
  sigma_px?: number;
  kernel?: string;
  search?: Partial<SearchConfigDict>;
}

/** Body of POST /sessions/{id}/captures — a pose to simulate, or raw corners. */
export interface CaptureRequest {
  pose?: PoseDict | null;
  view?: { left_pixels: [number, number][]; right_pixels: [number, number][] } | null;
  sigma?: number | null;
}

async function parseError(res: Response): Promise<ServiceError> {
  let body: ApiErrorBody | null = null;
  try {
    body = (await res.json()) as ApiErrorBody;
  } catch {
    // non-JSON error body; fall through to a generic error
  }
  if (body && typeof body.code === "string") {
    return new ServiceError(body.code, body.message ?? res.statusText, res.status);
  }
  return new ServiceError("HTTP_" + res.status, res.statusText, res.status);
}

/** REST client for one service instance. */
export class SessionApi {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  /**
   * @param baseUrl service origin, e.g. "" (same origin) or "http://host:8000"
   * @param fetchImpl transport override; defaults to the global fetch
   */
  constructor(baseUrl = "", fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchImpl(this.base + path, init);
    if (!res.ok) {
      throw await parseError(res);
    }
    return (await res.json()) as T;
  }

  /** Create a session; returns its id plus the initial snapshot. */
  createSession(req: CreateSessionRequest): Promise<CreateResponse> {
    return this.request("POST", "/sessions", req);
  }

  /** Fetch the authoritative session snapshot. */
  getState(id: string): Promise<SessionSnapshot> {
    return this.request("GET", `/sessions/${id}`);
  }

  /** Add one capture (simulated pose or externally detected corners). */
  postCapture(id: string, req: CaptureRequest): Promise<CaptureSummary> {
    return this.request("POST", `/sessions/${id}/captures`, req);
  }

  /** Ask the planner for the next placement. */
  postSuggest(id: string): Promise<SuggestResponse> {
    return this.request("POST", `/sessions/${id}/suggest`, {});
  }

  /**
   * Long-poll the event feed: events with seq >= after, blocking server-side
   * up to `wait` seconds when there is nothing new yet.
   */
  pollEvents(id: string, after: number, wait = 0): Promise<EventsResponse> {
    const qs = `after=${after}&wait=${wait}`;
    return this.request("GET", `/sessions/${id}/events?${qs}`);
  }
}

/**
 * Push-channel subscription: one long-poll loop per open session, invoking
 * `onChange` whenever the server confirms new events.  Returns a stop
 * function.  The loop never runs two polls concurrently, and it resumes
 * from the last confirmed cursor, so every event is seen exactly once.
 */
export function subscribeEvents(
  api: SessionApi,
  id: string,
  firstSeq: number,
  onChange: (events: EventsResponse) => void,
  waitSeconds = 25,
): () => void {
  let stopped = false;
  let cursor = firstSeq;

  const loop = async () => {
    while (!stopped) {
      try {
        const res = await api.pollEvents(id, cursor, waitSeconds);
        if (stopped) {
          return;
        }
        if (res.events.length > 0) {
          cursor = res.next;
          onChange(res);
        }
      } catch {
        // transient transport failure: back off briefly and retry
        await new Promise((r) => setTimeout(r, 1000));
      }
    }
  };
  void loop();
  return () => {
    stopped = true;
  };
}
