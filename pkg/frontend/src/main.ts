/** Bootstrap: wires the API client, state transitions, and renderer. */

import { ServiceClient, ServiceError } from "./api.js";
import * as state from "./state.js";
import type { UiState } from "./state.js";
import { renderApp, type ViewHandlers } from "./view.js";

export class App {
  private state: UiState = state.initialState();
  private lastFailedText: string | null = null;

  constructor(
    private readonly client: ServiceClient,
    private readonly root: HTMLElement,
  ) {}

  /** Test hook: current immutable state. */
  get currentState(): UiState {
    return this.state;
  }

  private update(next: UiState): void {
    this.state = next;
    renderApp(this.root, this.state, this.handlers);
  }

  async start(): Promise<void> {
    const sessionId = await this.client.createSession();
    this.update(state.sessionStarted(this.state, sessionId));
  }

  async send(text: string): Promise<void> {
    const begun = state.sendStarted(this.state, text);
    if (begun === this.state) return; // refused: pending, empty, or no session
    this.update(begun);
    try {
      const turn = await this.client.sendMessage(this.state.sessionId!, text.trim());
      this.lastFailedText = null;
      this.update(state.answerReceived(this.state, turn));
    } catch (err) {
      const serviceErr = err instanceof ServiceError ? err : new ServiceError(0, String(err));
      this.lastFailedText = text.trim();
      this.update(state.sendFailed(this.state, serviceErr.message, serviceErr.retriable));
    }
  }

  async expandSource(sectionId: string): Promise<void> {
    if (!state.knownSectionIds(this.state).has(sectionId)) return;
    try {
      const section = await this.client.getSection(sectionId);
      this.update(state.sourceExpanded(this.state, section.section_id, section.header_path, section.body));
    } catch (err) {
      const serviceErr = err instanceof ServiceError ? err : new ServiceError(0, String(err));
      this.update({ ...this.state, banner: serviceErr.message, bannerRetriable: false });
    }
  }

  async submitFeedback(): Promise<void> {
    const { category, rating } = this.state.feedback;
    if (rating === null || !this.state.sessionId) return;
    try {
      await this.client.postFeedback(this.state.sessionId, category, rating);
      this.update(state.feedbackSubmitted(this.state));
    } catch (err) {
      const serviceErr = err instanceof ServiceError ? err : new ServiceError(0, String(err));
      this.update({ ...this.state, banner: serviceErr.message, bannerRetriable: false });
    }
  }

  retryLastSend(): void {
    if (this.lastFailedText) void this.send(this.lastFailedText);
  }

  private handlers: ViewHandlers = {
    onSend: (text) => void this.send(text),
    onDraftChange: (text) => {
      // no re-render on keystroke; the input element owns its value
      this.state = state.draftChanged(this.state, text);
    },
    onExpandSource: (sectionId) => void this.expandSource(sectionId),
    onCollapseSource: () => this.update(state.sourceCollapsed(this.state)),
    onRating: (rating) => this.update(state.feedbackRatingChanged(this.state, rating)),
    onCategory: (category) =>
      this.update(
        state.feedbackCategoryChanged(this.state, category as UiState["feedback"]["category"]),
      ),
    onSubmitFeedback: () => void this.submitFeedback(),
    onRetry: () => this.retryLastSend(),
    onDismissBanner: () => this.update(state.bannerDismissed(this.state)),
  };
}

export function mount(root: HTMLElement, baseUrl: string): App {
  const app = new App(new ServiceClient(baseUrl), root);
  void app.start();
  return app;
}

declare global {
  interface Window {
    coursepilotApp?: App;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const rootEl = document.getElementById("app") as HTMLElement;
  window.coursepilotApp = mount(rootEl, rootEl.dataset["apiBase"] ?? "");
}
