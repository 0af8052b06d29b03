/** Typed client for the coursepilot HTTP API. */

export interface Source {
  section_id: string;
  header_path: string[];
  similarity: number;
}

export interface AssistantTurn {
  role: string;
  text: string;
  created_at: string;
  sources: Source[];
}

export interface SectionBody {
  section_id: string;
  header_path: string[];
  body: string;
}

export interface Health {
  status: string;
  kb_id: string | null;
  section_count: number;
}

export type FeedbackCategory = "helpfulness" | "accuracy" | "performance";

export interface FeedbackSummaryBlock {
  counts: Record<string, number>;
  n: number;
  mean?: number;
}

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ServiceError";
  }

  /** 503s are transient provider outages and worth a retry. */
  get retriable(): boolean {
    return this.status === 503;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
    private readonly authToken?: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.authToken) headers["Authorization"] = `Bearer ${this.authToken}`;
    let resp: Response;
    try {
      resp = await this.fetchFn(`${this.baseUrl}${path}`, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ServiceError(0, `network failure: ${String(err)}`);
    }
    if (!resp.ok) {
      let detail = `HTTP ${resp.status}`;
      try {
        const payload = (await resp.json()) as { detail?: string };
        if (payload.detail) detail = payload.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ServiceError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<Health> {
    return this.request<Health>("GET", "/v1/health");
  }

  async createSession(): Promise<string> {
    const body = await this.request<{ session_id: string }>("POST", "/v1/sessions");
    return body.session_id;
  }

  sendMessage(sessionId: string, text: string): Promise<AssistantTurn> {
    return this.request<AssistantTurn>("POST", `/v1/sessions/${sessionId}/messages`, { text });
  }

  getSection(sectionId: string): Promise<SectionBody> {
    return this.request<SectionBody>("GET", `/v1/kb/sections/${sectionId}`);
  }

  postFeedback(sessionId: string, category: FeedbackCategory, rating: number, comment?: string): Promise<void> {
    return this.request<void>("POST", "/v1/feedback", {
      session_id: sessionId,
      question_category: category,
      rating,
      comment: comment ?? null,
    });
  }

  feedbackSummary(): Promise<Record<FeedbackCategory, FeedbackSummaryBlock>> {
    return this.request<Record<FeedbackCategory, FeedbackSummaryBlock>>("GET", "/v1/feedback/summary");
  }
}
