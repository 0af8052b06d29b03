// @vitest-environment happy-dom
//
// Scripted end-to-end flow against the real Python service (mock providers):
// start session -> question -> follow-up -> source expansion -> feedback.
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, mkdirSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { ServiceClient } from "../src/api.js";
import { App } from "../src/main.js";

const PORT = 8917 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

const COURSE_FILES: Record<string, string> = {
  "week1.md": [
    "# Wireless Security",
    "WPA2 uses AES for encryption. Rogue access points are a threat.",
    "",
    "# Authentication",
    "Passwords and MFA protect accounts. Tokens expire daily.",
    "",
  ].join("\n"),
  "week2.md": ["# Encryption", "AES is a block cipher. RSA is an asymmetric algorithm.", ""].join("\n"),
};

let proc: ChildProcess;
let workdir: string;

async function waitForHealth(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/v1/health`);
      if (resp.ok) return;
    } catch (err) {
      lastError = err;
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error(`service did not come up on ${BASE}: ${String(lastError)}`);
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "coursepilot-ui-"));
  const corpusDir = join(workdir, "corpus");
  mkdirSync(corpusDir);
  for (const [name, text] of Object.entries(COURSE_FILES)) {
    writeFileSync(join(corpusDir, name), text);
  }
  const configPath = join(workdir, "config.json");
  writeFileSync(
    configPath,
    JSON.stringify({
      kb_path: join(workdir, "course.kb"),
      feedback_path: join(workdir, "feedback.jsonl"),
      listen_addr: `127.0.0.1:${PORT}`,
      embedder: { provider_kind: "reference_hash", model_id: "reference-hash-128", dims: 128 },
      generator: { provider_kind: "mock_echo", model_id: "mock-echo" },
    }),
  );

  proc = spawn("python3", ["-m", "coursepilot.cli", "serve", "--config", configPath], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  proc.stderr?.on("data", (chunk: Buffer) => {
    process.stderr.write(`[service] ${chunk.toString()}`);
  });
  await waitForHealth(30_000);

  const ingest = await fetch(`${BASE}/v1/ingest`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ input_dir: corpusDir }),
  });
  expect(ingest.ok).toBe(true);
  const body = (await ingest.json()) as { section_count: number };
  expect(body.section_count).toBe(3);
}, 60_000);

afterAll(() => {
  proc?.kill("SIGTERM");
});

describe("live QA loop against the mock-backed service", () => {
  it("drives session, follow-up, source expansion, and feedback", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    const root = document.getElementById("app") as HTMLElement;
    const client = new ServiceClient(BASE);
    const app = new App(client, root);

    // start session
    await app.start();
    const sessionId = app.currentState.sessionId;
    expect(sessionId).toBeTruthy();

    // first question: bubble pair + at least one source chip
    await app.send("Wireless Security");
    expect(app.currentState.messages.map((m) => m.role)).toEqual(["user", "assistant"]);
    const chips = root.querySelectorAll('[data-testid="source-chip"]');
    expect(chips.length).toBeGreaterThanOrEqual(1);

    // every chip id came from the server's response for this turn
    const serverIds = new Set(
      app.currentState.messages.flatMap((m) => m.sources.map((s) => s.section_id)),
    );
    for (const chip of chips) {
      expect(serverIds.has(chip.getAttribute("data-section-id")!)).toBe(true);
    }

    // follow-up rides the same session; server history shows four turns
    await app.send("What about key rotation?");
    expect(app.currentState.sessionId).toBe(sessionId);
    const history = (await (await fetch(`${BASE}/v1/sessions/${sessionId}`)).json()) as {
      turns: { role: string }[];
    };
    expect(history.turns.map((t) => t.role)).toEqual(["user", "assistant", "user", "assistant"]);

    // expand the first source: panel shows the section body from the server
    const firstChipId = chips[0]!.getAttribute("data-section-id")!;
    await app.expandSource(firstChipId);
    expect(app.currentState.expanded?.sectionId).toBe(firstChipId);
    expect(root.querySelector('[data-testid="source-body"]')!.textContent!.length).toBeGreaterThan(0);

    // feedback: rating 5 on helpfulness increments the summary
    const before = await client.feedbackSummary();
    const beforeCount = before.helpfulness.counts["5"] ?? 0;

    (root.querySelector('[data-testid="star-5"]') as HTMLButtonElement).click();
    expect(app.currentState.feedback.rating).toBe(5);
    await app.submitFeedback();
    expect(app.currentState.feedback.submitted).toBe(true);

    const after = await client.feedbackSummary();
    expect(after.helpfulness.counts["5"]).toBe(beforeCount + 1);
    expect(after.helpfulness.n).toBe(before.helpfulness.n + 1);
  }, 30_000);

  it("rejects forged source expansion without a server-provided id", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    const root = document.getElementById("app") as HTMLElement;
    const app = new App(new ServiceClient(BASE), root);
    await app.start();
    await app.send("Encryption");
    const state = app.currentState;
    await app.expandSource("forged-id");
    expect(app.currentState.expanded).toBeNull();
    expect(app.currentState).toStrictEqual(state);
  }, 30_000);
});
