/**
 * Test harness: replays recorded service traffic through the client's
 * injectable fetch, and builds the DOM slots the screen renders into.
 *
 * The fixtures under tests/fixtures/ are genuine request/response pairs
 * captured from the Python service (see scripts/record_fixtures.py), so
 * every number the tests compare against came out of the real pipeline.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { FetchLike } from "../src/api";
import type { AppElements } from "../src/app";

/** One recorded HTTP exchange. */
export interface TrafficRecord {
  method: string;
  path: string;
  request: unknown;
  status: number;
  response: unknown;
}

/** A recorded traffic fixture. */
export interface TrafficFixture {
  description: string;
  records: TrafficRecord[];
}

const FIXTURE_DIR = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

/** Load a fixture by file name. */
export function loadFixture(name: string): TrafficFixture {
  return JSON.parse(readFileSync(join(FIXTURE_DIR, name), "utf-8")) as TrafficFixture;
}

/** What the client actually sent for one request. */
export interface SentRequest {
  method: string;
  path: string;
  body: unknown;
}

/**
 * Serves a fixture's records strictly in order; any deviation in method or
 * path fails the test immediately.  Request bodies are collected for the
 * caller to assert on.
 */
export class FakeService {
  readonly records: TrafficRecord[];
  readonly sent: SentRequest[] = [];
  cursor = 0;

  constructor(fixture: TrafficFixture) {
    this.records = fixture.records;
  }

  /** Fetch implementation to hand to SessionApi. */
  readonly fetch: FetchLike = (input, init) => {
    const method = init?.method ?? "GET";
    const expected = this.records[this.cursor];
    if (expected === undefined) {
      throw new Error(`unexpected request past end of fixture: ${method} ${input}`);
    }
    if (expected.method !== method || expected.path !== input) {
      throw new Error(
        `request #${this.cursor}: got ${method} ${input}, fixture has ${expected.method} ${expected.path}`,
      );
    }
    this.cursor += 1;
    const body = typeof init?.body === "string" ? JSON.parse(init.body) : null;
    this.sent.push({ method, path: input, body });
    return Promise.resolve(
      new Response(JSON.stringify(expected.response), {
        status: expected.status,
        headers: { "content-type": "application/json" },
      }),
    );
  };

  /** True when every recorded exchange has been replayed. */
  get exhausted(): boolean {
    return this.cursor === this.records.length;
  }
}

/** Build the DOM slots GuidanceApp renders into, attached to the document. */
export function makeAppElements(): AppElements {
  const make = (id: string): HTMLElement => {
    const el = document.createElement("div");
    el.id = id;
    document.body.appendChild(el);
    return el;
  };
  return {
    frame: make("frame"),
    controls: make("controls"),
    traceChart: make("trace-chart"),
    rmsChart: make("rms-chart"),
    triangChart: make("triang-chart"),
    status: make("status"),
    toast: make("toast"),
    placementWarning: make("placement-warning"),
  };
}
