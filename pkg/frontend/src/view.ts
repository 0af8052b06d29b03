/** DOM rendering: one render(state) pass over a fixed set of regions. */

import type { UiState } from "./state.js";

export interface ViewHandlers {
  onSend(text: string): void;
  onDraftChange(text: string): void;
  onExpandSource(sectionId: string): void;
  onCollapseSource(): void;
  onRating(rating: number): void;
  onCategory(category: string): void;
  onSubmitFeedback(): void;
  onRetry(): void;
  onDismissBanner(): void;
}

const CATEGORIES = ["helpfulness", "accuracy", "performance"];

export function renderApp(root: HTMLElement, state: UiState, handlers: ViewHandlers): void {
  root.textContent = "";
  root.append(
    renderBanner(state, handlers),
    renderMessages(state, handlers),
    renderSourcePanel(state, handlers),
    renderComposer(state, handlers),
    renderFeedback(state, handlers),
  );
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderBanner(state: UiState, handlers: ViewHandlers): HTMLElement {
  const banner = el("div", { "data-testid": "banner", class: "banner" });
  if (!state.banner) {
    banner.style.display = "none";
    return banner;
  }
  banner.append(el("span", {}, state.banner));
  if (state.bannerRetriable) {
    const retry = el("button", { "data-testid": "retry" }, "Retry");
    retry.addEventListener("click", () => handlers.onRetry());
    banner.append(retry);
  }
  const dismiss = el("button", { "data-testid": "dismiss" }, "Dismiss");
  dismiss.addEventListener("click", () => handlers.onDismissBanner());
  banner.append(dismiss);
  return banner;
}

function renderMessages(state: UiState, handlers: ViewHandlers): HTMLElement {
  const list = el("div", { "data-testid": "messages", class: "messages" });
  state.messages.forEach((message, index) => {
    const bubble = el(
      "div",
      { "data-testid": `message-${index}`, class: `bubble ${message.role}` },
    );
    bubble.append(el("p", {}, message.text));
    if (message.sources.length > 0) {
      const sources = el("div", { class: "sources" }, "Sources: ");
      for (const source of message.sources) {
        const chip = el(
          "button",
          { "data-testid": "source-chip", "data-section-id": source.section_id, class: "chip" },
          `${source.header_path.join(" > ")} (${source.similarity.toFixed(3)})`,
        );
        chip.addEventListener("click", () => handlers.onExpandSource(source.section_id));
        sources.append(chip);
      }
      bubble.append(sources);
    }
    list.append(bubble);
  });
  if (state.pending) {
    list.append(el("div", { "data-testid": "pending", class: "bubble pending" }, "Thinking..."));
  }
  return list;
}

function renderSourcePanel(state: UiState, handlers: ViewHandlers): HTMLElement {
  const panel = el("aside", { "data-testid": "source-panel", class: "source-panel" });
  if (!state.expanded) {
    panel.style.display = "none";
    return panel;
  }
  panel.append(el("h3", {}, state.expanded.headerPath.join(" > ")));
  panel.append(el("pre", { "data-testid": "source-body" }, state.expanded.body));
  const close = el("button", { "data-testid": "close-source" }, "Close");
  close.addEventListener("click", () => handlers.onCollapseSource());
  panel.append(close);
  return panel;
}

function renderComposer(state: UiState, handlers: ViewHandlers): HTMLElement {
  const form = el("form", { "data-testid": "composer", class: "composer" });
  const input = el("input", {
    "data-testid": "draft",
    type: "text",
    placeholder: "Ask about the course material...",
  });
  input.value = state.draft;
  input.addEventListener("input", () => handlers.onDraftChange(input.value));
  const send = el("button", { "data-testid": "send", type: "submit" }, "Send");
  if (state.pending || !state.sessionId) send.setAttribute("disabled", "disabled");
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (!state.pending) handlers.onSend(input.value);
  });
  form.append(input, send);
  return form;
}

function renderFeedback(state: UiState, handlers: ViewHandlers): HTMLElement {
  const box = el("section", { "data-testid": "feedback", class: "feedback" });
  box.append(el("h4", {}, "Rate this assistant"));

  const select = el("select", { "data-testid": "feedback-category" });
  for (const category of CATEGORIES) {
    const option = el("option", { value: category }, category);
    if (category === state.feedback.category) option.setAttribute("selected", "selected");
    select.append(option);
  }
  select.addEventListener("change", () => handlers.onCategory(select.value));
  box.append(select);

  const stars = el("div", { class: "stars" });
  for (let rating = 1; rating <= 5; rating += 1) {
    const star = el(
      "button",
      {
        "data-testid": `star-${rating}`,
        class: state.feedback.rating !== null && rating <= state.feedback.rating ? "star on" : "star",
      },
      "*",
    );
    star.addEventListener("click", () => handlers.onRating(rating));
    stars.append(star);
  }
  box.append(stars);

  const submit = el("button", { "data-testid": "submit-feedback" }, "Submit");
  if (state.feedback.rating === null || !state.sessionId) submit.setAttribute("disabled", "disabled");
  submit.addEventListener("click", () => handlers.onSubmitFeedback());
  box.append(submit);

  if (state.feedback.submitted) {
    box.append(el("span", { "data-testid": "feedback-thanks" }, "Thanks for the feedback!"));
  }
  return box;
}
